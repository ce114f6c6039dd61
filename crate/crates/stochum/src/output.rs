//! Result files. Every file is written to a temporary sibling and renamed,
//! so readers never observe a partial file.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use stochum_core::NormCurve;

pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// `T,N,V,duality_gap,cg_iters,converged`, one row per sample.
pub fn curve_csv(curve: &NormCurve) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["T", "N", "V", "duality_gap", "cg_iters", "converged"])
        .expect("in-memory write");
    for s in &curve.samples {
        w.write_record([
            format!("{:e}", s.horizon),
            format!("{:e}", s.norm),
            format!("{:e}", s.value),
            format!("{:e}", s.duality_gap),
            s.cg_iterations.to_string(),
            s.converged.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// `level,time,norm` for a per-level control profile.
pub fn bangbang_csv(profile: &[f64], dt: f64) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "time", "norm"])
        .expect("in-memory write");
    for (level, m) in profile.iter().enumerate() {
        w.write_record([
            level.to_string(),
            format!("{:e}", level as f64 * dt),
            format!("{m:e}"),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bangbang_rows() {
        let text = String::from_utf8(bangbang_csv(&[1.0, 0.5], 0.25)).unwrap();
        assert_eq!(text, "level,time,norm\n0,0e0,1e0\n1,2.5e-1,5e-1\n");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        let leftovers = fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
