//! Saving, loading and validating checkpoints.

use lowlight::bpn::{bpn_init, BpnConfig};
use lowlight::conditioning::NormStats;
use lowlight::esn::{esn_init, EsnConfig};
use lowlight::harness::{Checkpoint, Provenance, CHECKPOINT_MAGIC};

pub fn run() -> lowlight::Result<()> {
    let esn_config = EsnConfig::default();
    let bpn_config = BpnConfig::default();
    let ckpt = Checkpoint {
        esn_params: esn_init(&esn_config, 1)?,
        esn_config,
        bpn: Some((bpn_config.clone(), bpn_init(&bpn_config, 2, -3.0)?)),
        stats: NormStats::identity(),
        provenance: Provenance { train_seed: 1, esn_epochs: 40, bpn_epochs: 15, ..Default::default() },
    };
    let bytes = ckpt.to_bytes()?;
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
    println!(
        "{} parameters ({} ESN, {} BPN) in {} bytes",
        ckpt.esn_params.numel() + ckpt.bpn.as_ref().map_or(0, |(_, p)| p.numel()),
        ckpt.esn_params.numel(),
        ckpt.bpn.as_ref().map_or(0, |(_, p)| p.numel()),
        bytes.len()
    );

    // values are stored in single precision, after which the form is canonical
    let back = Checkpoint::from_bytes(&bytes)?;
    assert_eq!(back.to_bytes()?, bytes);
    let widest = ckpt
        .esn_params
        .tensors()
        .iter()
        .zip(back.esn_params.tensors())
        .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!("reloaded; largest rounding change {widest:.2e}; re-save is byte-identical");

    let path = std::env::temp_dir().join("lowlight-example.ckpt");
    back.save(&path)?;
    println!("saved to {}", path.display());

    let mut broken = bytes.clone();
    broken[4] = 9;
    println!("wrong version: {}", Checkpoint::from_bytes(&broken).unwrap_err());
    println!("truncated: {}", Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err());
    Ok(())
}

fn main() {
    run().unwrap();
}
