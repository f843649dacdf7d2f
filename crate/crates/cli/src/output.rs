use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliResult;

/// Writes CSV files that start with a `# bsgp config_sha256=... seed=...` line.
#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
    stamp: String,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: &str, seed: u64) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), stamp: format!("# bsgp config_sha256={hash} seed={seed}\n") })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `header` and `rows`; returns the file path.
    pub fn write_csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut buf = self.stamp.clone().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        let path = self.path(name);
        fs::write(&path, buf)?;
        Ok(path)
    }
}

/// Fixed-precision formatting so reruns are byte-identical.
pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// Opens a CSV written by [`OutputDir`], skipping the stamp line.
pub fn read_stamped(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?)
}
