//! Minibatch training of the fixed-point operator on snapshot datasets.
//!
//! The prediction for a snapshot (zeta, u, u_ref) is the operator's own
//! output u + eta * G_B(u) with Dirichlet entries reset, and the loss is the
//! relative MSE against u_ref. Residuals (and hence eta's inputs) depend
//! only on the data, so they are precomputed once.

use crate::error::{Error, Result};
use crate::nn::fpno::FpnoModel;
use crate::nn::FlatParams;
use crate::problems::NonlinearSystem;
use crate::sparse::norm2;
use crate::train::dataset::Dataset;
use crate::train::opt::{rel_mse_loss_grad, AdamW, AdamWConfig};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Stop after this many consecutive epochs without validation
    /// improvement.
    pub patience: usize,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            optimizer: AdamWConfig::default(),
            patience: 1000,
            max_epochs: 5000,
            shuffle_seed: 0,
        }
    }
}

/// Per-epoch record: (epoch, mean train loss, validation relative L2).
pub type HistoryRow = (usize, f64, f64);

pub struct TrainOutput {
    /// Parameters of the best validation epoch, not the final epoch.
    pub model: FpnoModel,
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Training hit a non-finite loss and stopped; `model` is the last good
    /// checkpoint.
    pub aborted_nan: bool,
}

/// Snapshot tensors of one split, rows aligned across arrays.
struct SplitTensors {
    u: Array2<f64>,
    r_tilde: Array2<f64>,
    r_norm: Array1<f64>,
    zeta: Array2<f64>,
    u_ref: Array2<f64>,
}

fn collect_split(data: &Dataset, group_ids: &[usize]) -> Result<SplitTensors> {
    let mesh = data.mesh.build()?;
    let n_dofs = data.d * mesh.n_nodes();
    let rows: usize = group_ids
        .iter()
        .map(|&g| data.groups[g].iterates.len())
        .sum();
    let mut u = Array2::zeros((rows, n_dofs));
    let mut r_tilde = Array2::zeros((rows, n_dofs));
    let mut r_norm = Array1::zeros(rows);
    let zeta_dim = data.groups[0].zeta.len();
    let mut zeta = Array2::zeros((rows, zeta_dim));
    let mut u_ref = Array2::zeros((rows, n_dofs));
    let mut row = 0;
    for &g in group_ids {
        let group = &data.groups[g];
        let problem = data.problem_for(&mesh, group)?;
        for iterate in &group.iterates {
            let u_free = problem.dofmap.to_free(iterate)?;
            let r_free = problem.residual(&u_free)?;
            let rn = norm2(&r_free);
            let r_full = problem.dofmap.scatter_free(&r_free)?;
            for (k, &v) in iterate.iter().enumerate() {
                u[[row, k]] = v;
                u_ref[[row, k]] = group.u_ref[k];
            }
            if rn > 0.0 {
                for (k, &v) in r_full.iter().enumerate() {
                    r_tilde[[row, k]] = v / rn;
                }
            }
            r_norm[row] = rn;
            for (k, &z) in group.zeta.iter().enumerate() {
                zeta[[row, k]] = z;
            }
            row += 1;
        }
    }
    Ok(SplitTensors {
        u,
        r_tilde,
        r_norm,
        zeta,
        u_ref,
    })
}

/// Forward pass of the operator on a batch of precomputed snapshot rows;
/// returns the prediction and the scalar step sizes eta.
fn predict_batch(
    model: &FpnoModel,
    u: &Array2<f64>,
    r_tilde: &Array2<f64>,
    r_norm: &Array1<f64>,
    zeta: &Array2<f64>,
    coords: &Array2<f64>,
    constrained: &[usize],
) -> Result<(Array2<f64>, Array1<f64>)> {
    let s = model.scaling.forward(r_tilde)?;
    let eta = Array1::from_iter(
        s.column(0)
            .iter()
            .zip(r_norm.iter())
            .map(|(&si, &rn)| (rn * si).tanh()),
    );
    let g = model.backbone.forward(u, zeta, coords)?;
    let mut pred = u.clone();
    for (b, mut row) in pred.rows_mut().into_iter().enumerate() {
        let e = eta[b];
        for (k, v) in row.iter_mut().enumerate() {
            *v += e * g[[b, k]];
        }
    }
    // Dirichlet reset: iterates already satisfy the boundary values, so
    // resetting means copying them back from the input.
    for &dof in constrained {
        for b in 0..pred.nrows() {
            pred[[b, dof]] = u[[b, dof]];
        }
    }
    Ok((pred, eta))
}

/// Mean relative L2 error |pred - ref| / |ref| over the rows of a split.
fn mean_rel_l2(model: &FpnoModel, t: &SplitTensors, coords: &Array2<f64>, constrained: &[usize], batch: usize) -> Result<f64> {
    let rows = t.u.nrows();
    let mut total = 0.0;
    let mut start = 0;
    while start < rows {
        let end = (start + batch).min(rows);
        let idx: Vec<usize> = (start..end).collect();
        let (pred, _) = predict_batch(
            model,
            &t.u.select(Axis(0), &idx),
            &t.r_tilde.select(Axis(0), &idx),
            &t.r_norm.select(Axis(0), &idx),
            &t.zeta.select(Axis(0), &idx),
            coords,
            constrained,
        )?;
        let refs = t.u_ref.select(Axis(0), &idx);
        for (prow, rrow) in pred.rows().into_iter().zip(refs.rows()) {
            let mut num = 0.0;
            let mut den = 0.0;
            for (&p, &r) in prow.iter().zip(rrow) {
                num += (p - r) * (p - r);
                den += r * r;
            }
            total += if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        }
        start = end;
    }
    Ok(total / rows as f64)
}

/// Trains the operator; returns the best-validation checkpoint and the
/// per-epoch history.
pub fn train(model: FpnoModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    if data.groups.is_empty() || data.train_groups.is_empty() {
        return Err(Error::DataGenFailure("empty dataset".into()));
    }
    let mesh = data.mesh.build()?;
    let coords = crate::nn::fpno::coords_matrix(&mesh);
    // Constrained dof set; identical across groups (only prescribed values
    // differ), so take it from the first group's problem.
    let constrained: Vec<usize> = {
        let problem = data.problem_for(&mesh, &data.groups[0])?;
        problem
            .dofmap
            .constrained_dofs
            .iter()
            .map(|&(dof, _)| dof)
            .collect()
    };
    let train_t = collect_split(data, &data.train_groups)?;
    let val_t = collect_split(data, &data.val_groups)?;
    let n_train = train_t.u.nrows();
    let batch = cfg.batch_size.max(1).min(n_train);

    let mut model = model;
    let block_sizes: Vec<usize> = model.flat().iter().map(|b| b.len()).collect();
    let mut opt = AdamW::new(cfg.optimizer, &block_sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut aborted_nan = false;

    let mut order: Vec<usize> = (0..n_train).collect();
    'epochs: for epoch in 0..cfg.max_epochs {
        for i in (1..order.len()).rev() {
            let k = rng.random_range(0..=i);
            order.swap(i, k);
        }
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(batch) {
            let u = train_t.u.select(Axis(0), chunk);
            let r_tilde = train_t.r_tilde.select(Axis(0), chunk);
            let r_norm = train_t.r_norm.select(Axis(0), chunk);
            let zeta = train_t.zeta.select(Axis(0), chunk);
            let u_ref = train_t.u_ref.select(Axis(0), chunk);

            // Forward with caches.
            let (s_out, s_cache) = model.scaling.forward_cached(&r_tilde)?;
            let eta = Array1::from_iter(
                s_out
                    .column(0)
                    .iter()
                    .zip(r_norm.iter())
                    .map(|(&si, &rn)| (rn * si).tanh()),
            );
            let (g, bb_cache) = model.backbone.forward_cached(&u, &zeta, &coords)?;
            let mut pred = u.clone();
            for (b, mut row) in pred.rows_mut().into_iter().enumerate() {
                let e = eta[b];
                for (k, v) in row.iter_mut().enumerate() {
                    *v += e * g[[b, k]];
                }
            }
            for &dof in &constrained {
                for b in 0..pred.nrows() {
                    pred[[b, dof]] = u[[b, dof]];
                }
            }

            let (loss, mut dpred) = rel_mse_loss_grad(&pred, &u_ref)?;
            if !loss.is_finite() {
                aborted_nan = true;
                break 'epochs;
            }
            epoch_loss += loss;
            n_batches += 1;

            // Reset entries carry no gradient.
            for &dof in &constrained {
                for b in 0..dpred.nrows() {
                    dpred[[b, dof]] = 0.0;
                }
            }

            // pred = u + eta * g
            let mut dg = dpred.clone();
            let mut ds = Array2::zeros((dpred.nrows(), 1));
            for b in 0..dpred.nrows() {
                let mut deta = 0.0;
                for k in 0..dpred.ncols() {
                    deta += dpred[[b, k]] * g[[b, k]];
                    dg[[b, k]] *= eta[b];
                }
                ds[[b, 0]] = deta * r_norm[b] * (1.0 - eta[b] * eta[b]);
            }

            let mut grads = model.zeros_like();
            model.backbone.backward(&bb_cache, &dg, &mut grads.backbone)?;
            model.scaling.backward(&s_cache, &ds, &mut grads.scaling);

            let grad_blocks: Vec<&[f64]> = grads.flat();
            let mut param_blocks: Vec<&mut [f64]> = model.flat_mut();
            match opt.step(&mut param_blocks, &grad_blocks) {
                Ok(()) => {}
                Err(Error::OptStep(_)) => {
                    aborted_nan = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = epoch_loss / n_batches.max(1) as f64;
        let val = mean_rel_l2(&model, &val_t, &coords, &constrained, batch)?;
        history.push((epoch, train_loss, val));
        if !val.is_finite() {
            aborted_nan = true;
            break;
        }
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutput {
        model: best,
        history,
        best_epoch,
        best_val,
        aborted_nan,
    })
}

/// History CSV with the exact header `epoch,train_loss,val_rel_l2`.
pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_rel_l2\n");
    for &(epoch, loss, val) in history {
        out.push_str(&format!(
            "{epoch},{},{}\n",
            crate::solver::fmt_f64(loss),
            crate::solver::fmt_f64(val)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::GrfSpec;
    use crate::mesh::{ElemKind, MeshSpec, TagConvention};
    use crate::nn::fpno::ModelSpec;
    use crate::solver::SolveOptions;
    use crate::train::dataset::{generate_dataset, DataGenConfig, FamilySampling};

    fn tiny_dataset(m: usize) -> Dataset {
        generate_dataset(&DataGenConfig {
            mesh: MeshSpec {
                n: 3,
                kind: ElemKind::P1Tri,
                hole: None,
                convention: TagConvention::Poisson,
            },
            family: FamilySampling::PoissonGrf {
                forcing: GrfSpec::new(0.0, 0.1, 0.1),
            },
            m,
            seed: 3,
            init_grf: GrfSpec::new(0.0, 0.1, 0.1),
            solver: SolveOptions::default(),
            val_fraction: 0.25,
        })
        .unwrap()
    }

    fn tiny_model(data: &Dataset, seed: u64) -> FpnoModel {
        FpnoModel::init(
            ModelSpec {
                d: data.d,
                p: 8,
                hidden: 16,
                blocks: 1,
                scaling_blocks: 1,
                zeta_dim: data.groups[0].zeta.len(),
            },
            data.mesh,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn overfits_a_tiny_dataset() {
        let data = tiny_dataset(8);
        let model = tiny_model(&data, 1);
        let cfg = TrainConfig {
            batch_size: 16,
            optimizer: AdamWConfig {
                lr: 3e-3,
                ..AdamWConfig::default()
            },
            patience: 2000,
            max_epochs: 300,
            shuffle_seed: 9,
        };
        let out = train(model, &data, &cfg).unwrap();
        assert!(!out.aborted_nan);
        let first_loss = out.history.first().unwrap().1;
        let last_loss = out.history.last().unwrap().1;
        assert!(
            last_loss < first_loss / 10.0,
            "train loss should drop 10x: {first_loss} -> {last_loss}"
        );
    }

    #[test]
    fn returns_best_validation_checkpoint() {
        let data = tiny_dataset(8);
        let model = tiny_model(&data, 2);
        let cfg = TrainConfig {
            batch_size: 32,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            patience: 10_000,
            max_epochs: 50,
            shuffle_seed: 4,
        };
        let out = train(model, &data, &cfg).unwrap();
        let best_from_history = out
            .history
            .iter()
            .map(|&(_, _, v)| v)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val, best_from_history);
        assert_eq!(out.history[out.best_epoch].2, out.best_val);
        // The returned model evaluates to the recorded best value.
        let mesh = data.mesh.build().unwrap();
        let coords = crate::nn::fpno::coords_matrix(&mesh);
        let constrained: Vec<usize> = {
            let p = data.problem_for(&mesh, &data.groups[0]).unwrap();
            p.dofmap.constrained_dofs.iter().map(|&(d, _)| d).collect()
        };
        let val_t = collect_split(&data, &data.val_groups).unwrap();
        let v = mean_rel_l2(&out.model, &val_t, &coords, &constrained, 32).unwrap();
        assert!((v - out.best_val).abs() < 1e-12);
    }

    #[test]
    fn patience_stops_after_no_improvement() {
        let data = tiny_dataset(6);
        let model = tiny_model(&data, 3);
        // Zero learning rate: the validation error never improves after the
        // first epoch, so training stops after exactly `patience` more.
        let cfg = TrainConfig {
            batch_size: 32,
            optimizer: AdamWConfig {
                lr: 0.0,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            patience: 5,
            max_epochs: 1000,
            shuffle_seed: 1,
        };
        let out = train(model, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), 6, "first epoch + 5 non-improving");
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset(6);
        let cfg = TrainConfig {
            batch_size: 16,
            optimizer: AdamWConfig::default(),
            patience: 100,
            max_epochs: 5,
            shuffle_seed: 7,
        };
        let a = train(tiny_model(&data, 5), &data, &cfg).unwrap();
        let b = train(tiny_model(&data, 5), &data, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        for (pa, pb) in a.model.flat().iter().zip(b.model.flat().iter()) {
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn history_csv_header() {
        let csv = history_csv(&[(0, 0.5, 0.1)]);
        assert!(csv.starts_with("epoch,train_loss,val_rel_l2\n"));
    }
}
