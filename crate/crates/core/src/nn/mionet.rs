//! MIONet backbone: a branch net over the dof vector, a feature branch over
//! the PDE parameter, and a trunk over node coordinates, fused by a latent
//! inner product.
//!
//! For a d-component output the branch emits d*p coefficients; component c
//! at node k is `sum_i B[c*p + i] * Bf[i] * T(x_k)[i]`.

use crate::error::{Error, Result};
use crate::nn::{FlatParams, ResNet, ResNetCache, SeResNet, SeResNetCache};
use ndarray::{s, Array2};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MioNet {
    pub branch: SeResNet,
    pub feature: SeResNet,
    pub trunk: ResNet,
    /// Output components per node.
    pub d: usize,
    /// Latent width of the inner product.
    pub p: usize,
}

impl MioNet {
    pub fn init<R: Rng>(
        n_dof: usize,
        zeta_dim: usize,
        d: usize,
        p: usize,
        hidden: usize,
        n_blocks: usize,
        rng: &mut R,
    ) -> Self {
        MioNet {
            branch: SeResNet::init(n_dof, hidden, n_blocks, d * p, rng),
            feature: SeResNet::init(zeta_dim, hidden, n_blocks, p, rng),
            trunk: ResNet::init(2, hidden, n_blocks, p, rng),
            d,
            p,
        }
    }

    pub fn zeros_like(&self) -> Self {
        MioNet {
            branch: self.branch.zeros_like(),
            feature: self.feature.zeros_like(),
            trunk: self.trunk.zeros_like(),
            d: self.d,
            p: self.p,
        }
    }

    /// Full forward: evaluates all three subnets and fuses.
    /// `coords` is (n_nodes x 2); output is (batch x n_nodes * d), node-major.
    pub fn forward(
        &self,
        u: &Array2<f64>,
        zeta: &Array2<f64>,
        coords: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let b_out = self.branch.forward(u)?;
        let f_out = self.feature.forward(zeta)?;
        let t_out = self.trunk.forward(coords)?;
        fuse(&b_out, &f_out, &t_out, self.d)
    }

    /// Forward reusing a precomputed trunk output (the trunk only depends on
    /// node coordinates, fixed once a model is bound to a mesh).
    pub fn forward_with_trunk(
        &self,
        u: &Array2<f64>,
        zeta: &Array2<f64>,
        trunk_out: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let b_out = self.branch.forward(u)?;
        let f_out = self.feature.forward(zeta)?;
        fuse(&b_out, &f_out, trunk_out, self.d)
    }

    pub fn forward_cached(
        &self,
        u: &Array2<f64>,
        zeta: &Array2<f64>,
        coords: &Array2<f64>,
    ) -> Result<(Array2<f64>, MioNetCache)> {
        let (b_out, b_cache) = self.branch.forward_cached(u)?;
        let (f_out, f_cache) = self.feature.forward_cached(zeta)?;
        let (t_out, t_cache) = self.trunk.forward_cached(coords)?;
        let y = fuse(&b_out, &f_out, &t_out, self.d)?;
        Ok((
            y,
            MioNetCache {
                b_out,
                f_out,
                t_out,
                b_cache,
                f_cache,
                t_cache,
            },
        ))
    }

    /// Reverse pass of forward_cached; `dy` is (batch x n_nodes * d).
    pub fn backward(
        &self,
        cache: &MioNetCache,
        dy: &Array2<f64>,
        grads: &mut MioNet,
    ) -> Result<()> {
        let (db, df, dt) = fuse_backward(&cache.b_out, &cache.f_out, &cache.t_out, self.d, dy)?;
        self.branch.backward(&cache.b_cache, &db, &mut grads.branch);
        self.feature
            .backward(&cache.f_cache, &df, &mut grads.feature);
        self.trunk.backward(&cache.t_cache, &dt, &mut grads.trunk);
        Ok(())
    }
}

pub struct MioNetCache {
    pub b_out: Array2<f64>,
    pub f_out: Array2<f64>,
    pub t_out: Array2<f64>,
    b_cache: SeResNetCache,
    f_cache: SeResNetCache,
    t_cache: ResNetCache,
}

impl FlatParams for MioNet {
    fn flat(&self) -> Vec<&[f64]> {
        let mut v = self.branch.flat();
        v.extend(self.feature.flat());
        v.extend(self.trunk.flat());
        v
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.branch.flat_mut();
        v.extend(self.feature.flat_mut());
        v.extend(self.trunk.flat_mut());
        v
    }
}

/// Latent fusion: out[b, k*d + c] = sum_i branch[b, c*p+i] feat[b, i] trunk[k, i].
pub fn fuse(
    branch: &Array2<f64>,
    feat: &Array2<f64>,
    trunk: &Array2<f64>,
    d: usize,
) -> Result<Array2<f64>> {
    let p = feat.ncols();
    if branch.ncols() != d * p {
        return Err(Error::Dimension {
            expected: d * p,
            got: branch.ncols(),
        });
    }
    if trunk.ncols() != p {
        return Err(Error::Dimension {
            expected: p,
            got: trunk.ncols(),
        });
    }
    let batch = branch.nrows();
    let n_nodes = trunk.nrows();
    let mut out = Array2::zeros((batch, n_nodes * d));
    for c in 0..d {
        // coeff = branch_c .* feat, field_c = coeff . trunk^T
        let coeff = &branch.slice(s![.., c * p..(c + 1) * p]) * feat;
        let field = coeff.dot(&trunk.t());
        for b in 0..batch {
            for k in 0..n_nodes {
                out[[b, k * d + c]] = field[[b, k]];
            }
        }
    }
    Ok(out)
}

/// Gradients of [`fuse`] with respect to its three latent inputs.
pub fn fuse_backward(
    branch: &Array2<f64>,
    feat: &Array2<f64>,
    trunk: &Array2<f64>,
    d: usize,
    dy: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let p = feat.ncols();
    let batch = branch.nrows();
    let n_nodes = trunk.nrows();
    if dy.nrows() != batch || dy.ncols() != n_nodes * d {
        return Err(Error::Dimension {
            expected: n_nodes * d,
            got: dy.ncols(),
        });
    }
    let mut dbranch = Array2::zeros((batch, d * p));
    let mut dfeat = Array2::zeros((batch, p));
    let mut dtrunk = Array2::zeros((n_nodes, p));
    for c in 0..d {
        let mut g = Array2::zeros((batch, n_nodes));
        for b in 0..batch {
            for k in 0..n_nodes {
                g[[b, k]] = dy[[b, k * d + c]];
            }
        }
        let branch_c = branch.slice(s![.., c * p..(c + 1) * p]);
        let coeff = &branch_c * feat;
        // dcoeff = g . trunk ; dtrunk += g^T . coeff
        let dcoeff = g.dot(trunk);
        dtrunk += &g.t().dot(&coeff);
        dbranch
            .slice_mut(s![.., c * p..(c + 1) * p])
            .assign(&(&dcoeff * feat));
        dfeat += &(&dcoeff * &branch_c);
    }
    Ok((dbranch, dfeat, dtrunk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::FlatParams;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_inner_product() {
        // Single node, p = 2: B=[1,2], Bf=[3,4], T=[5,6] -> 1*3*5 + 2*4*6 = 63.
        let b = array![[1.0, 2.0]];
        let f = array![[3.0, 4.0]];
        let t = array![[5.0, 6.0]];
        let out = fuse(&b, &f, &t, 1).unwrap();
        assert_eq!(out[[0, 0]], 63.0);
    }

    #[test]
    fn zero_trunk_gives_zero_field() {
        let b = array![[1.0, 2.0, 3.0, 4.0]];
        let f = array![[1.0, 1.0]];
        let t = Array2::zeros((5, 2));
        let out = fuse(&b, &f, &t, 2).unwrap();
        assert_eq!(out.sum(), 0.0);
    }

    #[test]
    fn vector_output_splits_branch_coefficients() {
        // d = 2, p = 1: component c at node k is branch[c] * feat[0] * trunk[k].
        let b = array![[2.0, 5.0]];
        let f = array![[3.0]];
        let t = array![[1.0], [10.0]];
        let out = fuse(&b, &f, &t, 2).unwrap();
        assert_eq!(out[[0, 0]], 6.0); // node 0, comp 0
        assert_eq!(out[[0, 1]], 15.0); // node 0, comp 1
        assert_eq!(out[[0, 2]], 60.0); // node 1, comp 0
        assert_eq!(out[[0, 3]], 150.0); // node 1, comp 1
    }

    #[test]
    fn full_width_architecture_instantiates_and_runs() {
        // Full-size branch input of the coarse scalar benchmark (1089 dofs).
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MioNet::init(1089, 1089, 1, 256, 512, 2, &mut rng);
        assert_eq!(net.branch.fan_in(), 1089);
        assert_eq!(net.branch.fan_out(), 256);
        assert_eq!(net.feature.fan_out(), 256);
        assert_eq!(net.trunk.fan_out(), 256);
        let u = Array2::from_elem((1, 1089), 0.01);
        let z = Array2::from_elem((1, 1089), 0.1);
        let coords = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
        let y = net.forward(&u, &z, &coords).unwrap();
        assert_eq!(y.dim(), (1, 4));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = MioNet::init(5, 3, 2, 4, 6, 1, &mut rng);
        let u = Array2::from_shape_fn((2, 5), |_| rng.random::<f64>() - 0.5);
        let z = Array2::from_shape_fn((2, 3), |_| rng.random::<f64>() - 0.5);
        let coords = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>());

        let (y, cache) = net.forward_cached(&u, &z, &coords).unwrap();
        let dy = y.mapv(|v| 2.0 * v); // loss = sum y^2
        let mut grads = net.zeros_like();
        net.backward(&cache, &dy, &mut grads).unwrap();

        let gflat: Vec<f64> = grads.branch.flat().iter()
            .chain(grads.feature.flat().iter())
            .chain(grads.trunk.flat().iter())
            .flat_map(|s| s.iter().copied())
            .collect();

        let loss = |net: &MioNet| -> f64 {
            net.forward(&u, &z, &coords).unwrap().mapv(|v| v * v).sum()
        };
        let mut offset = 0;
        let n_branch_blocks = net.branch.flat().len();
        let n_feature_blocks = net.feature.flat().len();
        let total_blocks = n_branch_blocks + n_feature_blocks + net.trunk.flat().len();
        for bi in 0..total_blocks {
            let len = {
                let mut all = net.branch.flat();
                all.extend(net.feature.flat());
                all.extend(net.trunk.flat());
                all[bi].len()
            };
            for k in (0..len).step_by(11) {
                let eps = 1e-5;
                let set = |net: &mut MioNet, val: f64| {
                    let mut all = net.branch.flat_mut();
                    all.extend(net.feature.flat_mut());
                    all.extend(net.trunk.flat_mut());
                    all[bi][k] = val;
                };
                let get = |net: &mut MioNet| -> f64 {
                    let mut all = net.branch.flat_mut();
                    all.extend(net.feature.flat_mut());
                    all.extend(net.trunk.flat_mut());
                    all[bi][k]
                };
                let orig = get(&mut net);
                set(&mut net, orig + eps);
                let lp = loss(&net);
                set(&mut net, orig - eps);
                let lm = loss(&net);
                set(&mut net, orig);
                let fd = (lp - lm) / (2.0 * eps);
                let analytic = gflat[offset + k];
                let denom = analytic.abs().max(1e-7);
                assert!(
                    (analytic - fd).abs() / denom < 1e-5,
                    "block {bi} idx {k}: {analytic} vs {fd}"
                );
            }
            offset += len;
        }
    }
}
