//! Versioned binary containers for models and datasets.
//!
//! Little-endian throughout; all floating payloads are raw f64 bits, so
//! round trips are bit-exact. A version header is checked on load and any
//! truncation or shape mismatch is a format error.

use crate::error::{Error, Result};
use crate::mesh::{ElemKind, HoleSpec, MeshSpec, TagConvention};
use crate::nn::fpno::{FpnoModel, ModelSpec};
use crate::nn::FlatParams;
use crate::problems::ProblemKind;
use crate::train::dataset::{Dataset, SnapshotGroup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MODEL_MAGIC: &[u8; 4] = b"FPNM";
const DATASET_MAGIC: &[u8; 4] = b"FPND";
const FORMAT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Writer { buf }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn open(mut inner: R, magic: &[u8; 4]) -> Result<Self> {
        let mut head = [0u8; 4];
        inner
            .read_exact(&mut head)
            .map_err(|_| Error::Format("missing header".into()))?;
        if &head != magic {
            return Err(Error::Format("wrong magic bytes".into()));
        }
        let mut ver = [0u8; 4];
        inner
            .read_exact(&mut ver)
            .map_err(|_| Error::Format("missing version".into()))?;
        let version = u32::from_le_bytes(ver);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version}"
            )));
        }
        Ok(Reader { inner })
    }
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated payload".into()))?;
        Ok(b[0])
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated payload".into()))?;
        Ok(u64::from_le_bytes(b))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format("count overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::Format("truncated payload".into()))?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        let mut bytes = vec![0u8; 8 * n];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|_| Error::Format("truncated payload".into()))?;
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            out[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(out)
    }
    fn done(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format("trailing bytes after payload".into())),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

fn write_mesh_spec(w: &mut Writer, m: &MeshSpec) {
    w.u64(m.n as u64);
    w.u8(match m.kind {
        ElemKind::P1Tri => 0,
        ElemKind::Q1Quad => 1,
    });
    w.u8(match m.convention {
        TagConvention::Poisson => 0,
        TagConvention::Elasticity => 1,
    });
    match &m.hole {
        None => w.u8(0),
        Some(h) => {
            w.u8(1);
            w.f64(h.center[0]);
            w.f64(h.center[1]);
            w.f64(h.semi_axes[0]);
            w.f64(h.semi_axes[1]);
        }
    }
}

fn read_mesh_spec<R: Read>(r: &mut Reader<R>) -> Result<MeshSpec> {
    let n = r.usize()?;
    let kind = match r.u8()? {
        0 => ElemKind::P1Tri,
        1 => ElemKind::Q1Quad,
        k => return Err(Error::Format(format!("unknown element kind {k}"))),
    };
    let convention = match r.u8()? {
        0 => TagConvention::Poisson,
        1 => TagConvention::Elasticity,
        c => return Err(Error::Format(format!("unknown tag convention {c}"))),
    };
    let hole = match r.u8()? {
        0 => None,
        1 => Some(HoleSpec {
            center: [r.f64()?, r.f64()?],
            semi_axes: [r.f64()?, r.f64()?],
        }),
        h => return Err(Error::Format(format!("unknown hole flag {h}"))),
    };
    Ok(MeshSpec {
        n,
        kind,
        hole,
        convention,
    })
}

pub fn model_to_bytes(model: &FpnoModel) -> Vec<u8> {
    let mut w = Writer::new(MODEL_MAGIC);
    let s = &model.spec;
    for v in [s.d, s.p, s.hidden, s.blocks, s.scaling_blocks, s.zeta_dim] {
        w.u64(v as u64);
    }
    write_mesh_spec(&mut w, &model.train_mesh);
    w.u64(model.n_dof as u64);
    let blocks = model.flat();
    w.u64(blocks.len() as u64);
    for block in blocks {
        w.u64(block.len() as u64);
        w.f64s(block);
    }
    w.buf
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<FpnoModel> {
    let mut r = Reader::open(bytes, MODEL_MAGIC)?;
    let d = r.usize()?;
    let p = r.usize()?;
    let hidden = r.usize()?;
    let blocks = r.usize()?;
    let scaling_blocks = r.usize()?;
    let zeta_dim = r.usize()?;
    let spec = ModelSpec {
        d,
        p,
        hidden,
        blocks,
        scaling_blocks,
        zeta_dim,
    };
    let train_mesh = read_mesh_spec(&mut r)?;
    let n_dof = r.usize()?;
    // Materialize the architecture, then overwrite every parameter block.
    let mut model = FpnoModel::init(spec, train_mesh, &mut ChaCha8Rng::seed_from_u64(0))?;
    if model.n_dof != n_dof {
        return Err(Error::Format(
            "stored dof count disagrees with the mesh descriptor".into(),
        ));
    }
    let n_blocks = r.usize()?;
    {
        let mut blocks = model.flat_mut();
        if n_blocks != blocks.len() {
            return Err(Error::Format(format!(
                "expected {} parameter blocks, found {n_blocks}",
                blocks.len()
            )));
        }
        for block in blocks.iter_mut() {
            let len = r.usize()?;
            if len != block.len() {
                return Err(Error::Format(format!(
                    "parameter block length {len} does not match architecture ({})",
                    block.len()
                )));
            }
            let data = r.f64s(len)?;
            block.copy_from_slice(&data);
        }
    }
    r.done()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &FpnoModel) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FpnoModel> {
    let bytes = fs::read(path)?;
    model_from_bytes(&bytes)
}

pub fn dataset_to_bytes(data: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.u8(match data.kind {
        ProblemKind::NonlinearPoisson => 0,
        ProblemKind::NeoHookean => 1,
    });
    w.u64(data.d as u64);
    w.u64(data.seed);
    w.u64(data.discarded as u64);
    write_mesh_spec(&mut w, &data.mesh);
    let zeta_dim = data.groups.first().map_or(0, |g| g.zeta.len());
    let n_dofs = data.groups.first().map_or(0, |g| g.u_ref.len());
    w.u64(zeta_dim as u64);
    w.u64(n_dofs as u64);
    w.u64(data.groups.len() as u64);
    for g in &data.groups {
        w.f64s(&g.zeta);
        w.u64(g.iterates.len() as u64);
        for it in &g.iterates {
            w.f64s(it);
        }
        w.f64s(&g.u_ref);
    }
    w.u64(data.train_groups.len() as u64);
    for &g in &data.train_groups {
        w.u64(g as u64);
    }
    w.u64(data.val_groups.len() as u64);
    for &g in &data.val_groups {
        w.u64(g as u64);
    }
    w.buf
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(bytes, DATASET_MAGIC)?;
    let kind = match r.u8()? {
        0 => ProblemKind::NonlinearPoisson,
        1 => ProblemKind::NeoHookean,
        k => return Err(Error::Format(format!("unknown problem kind {k}"))),
    };
    let d = r.usize()?;
    let seed = r.u64()?;
    let discarded = r.usize()?;
    let mesh = read_mesh_spec(&mut r)?;
    let zeta_dim = r.usize()?;
    let n_dofs = r.usize()?;
    let n_groups = r.usize()?;
    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let zeta = r.f64s(zeta_dim)?;
        let n_iter = r.usize()?;
        let mut iterates = Vec::with_capacity(n_iter);
        for _ in 0..n_iter {
            iterates.push(r.f64s(n_dofs)?);
        }
        let u_ref = r.f64s(n_dofs)?;
        groups.push(SnapshotGroup {
            zeta,
            iterates,
            u_ref,
        });
    }
    let n_train = r.usize()?;
    let mut train_groups = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        train_groups.push(r.usize()?);
    }
    let n_val = r.usize()?;
    let mut val_groups = Vec::with_capacity(n_val);
    for _ in 0..n_val {
        val_groups.push(r.usize()?);
    }
    for &g in train_groups.iter().chain(&val_groups) {
        if g >= groups.len() {
            return Err(Error::Format(format!("split references group {g}")));
        }
    }
    r.done()?;
    Ok(Dataset {
        mesh,
        kind,
        d,
        seed,
        groups,
        train_groups,
        val_groups,
        discarded,
    })
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&dataset_to_bytes(data))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    dataset_from_bytes(&bytes)
}
