//! Group directories: `group_<NNNN>/frame_<K>.cidraw` for `K = 0..7` in
//! descending exposure order, plus a `manifest.txt` holding `gt_index=<int>`
//! and `invalid=<comma-separated ints>` lines.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ImageGroup, GROUP_SIZE};
use crate::error::{Error, Result};
use crate::rawproc::{read_cidraw_file, write_cidraw_file};

pub const MANIFEST: &str = "manifest.txt";

fn group_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("group_{id:04}"))
}

fn frame_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("frame_{k}.cidraw"))
}

/// Writes one group as `root/group_<id>`, returning that directory.
pub fn write_group(root: impl AsRef<Path>, id: usize, group: &ImageGroup) -> Result<PathBuf> {
    let dir = group_dir(root.as_ref(), id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (k, frame) in group.frames().iter().enumerate() {
        write_cidraw_file(frame_path(&dir, k), frame)?;
    }
    let invalid: Vec<String> = group.invalid().iter().map(usize::to_string).collect();
    let manifest = format!("gt_index={}\ninvalid={}\n", group.gt_index(), invalid.join(","));
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

pub fn read_group(dir: impl AsRef<Path>) -> Result<ImageGroup> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut gt_index = None;
    let mut invalid = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let bad = || Error::Dataset(format!("{}: malformed line {line:?}", path.display()));
        match line.split_once('=') {
            Some(("gt_index", v)) => gt_index = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
            Some(("invalid", v)) => {
                let set = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<BTreeSet<_>>>()?;
                invalid = Some(set);
            }
            _ => return Err(bad()),
        }
    }
    let (Some(gt_index), Some(invalid)) = (gt_index, invalid) else {
        return Err(Error::Dataset(format!(
            "{} must contain gt_index= and invalid= lines",
            path.display()
        )));
    };
    let frames = (0..GROUP_SIZE)
        .map(|k| read_cidraw_file(frame_path(dir, k)))
        .collect::<Result<Vec<_>>>()?;
    ImageGroup::new(frames, gt_index, invalid)
}

/// Writes groups as `group_0000`, `group_0001`, ... under `root`.
pub fn write_dataset(root: impl AsRef<Path>, groups: &[ImageGroup]) -> Result<()> {
    for (id, g) in groups.iter().enumerate() {
        write_group(root.as_ref(), id, g)?;
    }
    Ok(())
}

/// Reads every `group_<NNNN>` directory under `root` in name order.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<Vec<ImageGroup>> {
    let root = root.as_ref();
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("group_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Dataset(format!("no group_<NNNN> directories in {}", root.display())));
    }
    dirs.iter().map(read_group).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcam::{synth_dataset, DatasetSpec};

    #[test]
    fn dataset_round_trip() {
        let spec = DatasetSpec { groups: 2, height: 32, width: 32, seed: 9, ..Default::default() };
        let groups = synth_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &groups).unwrap();
        assert!(dir.path().join("group_0001/frame_7.cidraw").is_file());
        let text = fs::read_to_string(dir.path().join("group_0000").join(MANIFEST)).unwrap();
        assert!(text.starts_with("gt_index="));
        assert_eq!(read_dataset(dir.path()).unwrap(), groups);
    }

    #[test]
    fn malformed_manifest_rejected() {
        let spec = DatasetSpec { groups: 1, height: 32, width: 32, seed: 9, ..Default::default() };
        let groups = synth_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let g = write_group(dir.path(), 0, &groups[0]).unwrap();
        fs::write(g.join(MANIFEST), "gt_index=x\ninvalid=\n").unwrap();
        assert!(read_group(&g).is_err());
        fs::write(g.join(MANIFEST), "gt_index=1\n").unwrap();
        assert!(read_group(&g).is_err());
    }
}
