//! Model-provider tooling: fixed-point encodes a plaintext model, splits
//! it into three provisioning share files, and sanity-checks accuracy.

use moz_core::algebra::FRACTION_BITS;
use moz_core::infer::plain::{argmax, PlainModel};
use moz_core::infer::{reference_architecture, share_model};
use moz_core::session::PartyId;
use std::path::Path;

pub fn load_model(path: &Path) -> anyhow::Result<PlainModel> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn save_model(model: &PlainModel, path: &Path) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(model)?)?;
    Ok(())
}

/// A random demo model with the reference architecture.
pub fn demo_model(seed: u64) -> PlainModel {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    PlainModel::random(&reference_architecture(), &mut rng)
}

/// Writes `share1.bin` … `share3.bin` under `out_dir`; returns the paths.
pub fn write_share_files(model: &PlainModel, out_dir: &Path) -> anyhow::Result<[std::path::PathBuf; 3]> {
    let mut rng = rand::thread_rng();
    let shared = share_model(model, FRACTION_BITS, &mut rng)?;
    std::fs::create_dir_all(out_dir)?;
    let mut paths: [std::path::PathBuf; 3] = Default::default();
    for (party, share) in PartyId::ALL.iter().zip(shared.iter()) {
        let path = out_dir.join(format!("share{}.bin", party.number()));
        share.write_file(&path, *party)?;
        paths[party.index()] = path;
    }
    Ok(paths)
}

/// Plaintext accuracy of a model over labeled CSV rows.
pub fn plaintext_accuracy(model: &PlainModel, labeled: &[(Vec<f64>, Option<usize>)]) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (values, label) in labeled {
        let Some(label) = label else { continue };
        total += 1;
        if argmax(&model.forward_f64(values)) == *label {
            correct += 1;
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}
