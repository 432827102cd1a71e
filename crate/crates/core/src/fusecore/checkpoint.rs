//! Parameter checkpoints: one FTNSR file per tensor plus a `manifest.txt`
//! of `key = value` lines. Keys are either metadata (`activation`,
//! `max_order`) or parameter roles (`g.1.weight`, `f.bias`, ...) whose value
//! is the tensor's file name inside the directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{FuseParams, Projection, MAX_ORDER};
use crate::diffarray::{read_ftnsr, write_ftnsr, Activation, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: FuseParams,
    pub max_order: usize,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("# fusion decoder checkpoint\n");
    manifest.push_str(&format!("activation = {}\n", ckpt.params.activation));
    manifest.push_str(&format!("max_order = {}\n", ckpt.max_order));
    for (role, tensor) in ckpt.params.named() {
        let file = format!("{role}.ftnsr");
        write_ftnsr(dir.join(&file), tensor)?;
        manifest.push_str(&format!("{role} = {file}\n"));
    }
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

fn parse_manifest(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected `key = value`", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)?;
    let entries = parse_manifest(&text, &manifest_path)?;
    let missing = |key: &str| Error::format(&manifest_path, format!("missing `{key}`"));

    let activation: Activation = entries
        .get("activation")
        .ok_or_else(|| missing("activation"))?
        .parse()?;
    let max_order: usize = entries
        .get("max_order")
        .ok_or_else(|| missing("max_order"))?
        .parse()
        .map_err(|_| Error::format(&manifest_path, "max_order is not an integer"))?;
    if !(1..=MAX_ORDER).contains(&max_order) {
        return Err(Error::format(&manifest_path, "max_order out of range"));
    }

    let load = |role: &str| -> Result<Tensor> {
        let file = entries.get(role).ok_or_else(|| missing(role))?;
        read_ftnsr(dir.join(file))
    };
    let load_proj = |prefix: &str| -> Result<Projection> {
        Projection::new(load(&format!("{prefix}.weight"))?, load(&format!("{prefix}.bias"))?)
    };

    let levels = (1..)
        .take_while(|i| entries.contains_key(&format!("g.{i}.weight")))
        .count();
    let align = (1..=levels)
        .map(|i| load_proj(&format!("g.{i}")))
        .collect::<Result<Vec<_>>>()?;
    let mixers = if entries.contains_key("f.weight") {
        vec![load_proj("f")?]
    } else {
        (1..=levels)
            .map(|i| load_proj(&format!("f.{i}")))
            .collect::<Result<Vec<_>>>()?
    };
    let params = FuseParams {
        align,
        mixers,
        head: load_proj("head")?,
        activation,
    };
    params.validate()?;
    Ok(Checkpoint { params, max_order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusecore::FuseConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = FuseConfig::new(vec![4, 4, 4], 1);
        cfg.share_mixer = false;
        let params = FuseParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let ckpt = Checkpoint {
            params,
            max_order: 2,
        };
        save_checkpoint(dir.path(), &ckpt).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap(), ckpt);
    }

    #[test]
    fn missing_tensor_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FuseConfig::new(vec![2, 2], 1);
        let ckpt = Checkpoint {
            params: FuseParams::zeros(&cfg).unwrap(),
            max_order: 4,
        };
        save_checkpoint(dir.path(), &ckpt).unwrap();
        fs::remove_file(dir.path().join("head.bias.ftnsr")).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
