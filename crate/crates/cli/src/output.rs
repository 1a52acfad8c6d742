//! CSV emission. All files use comma separators, LF line endings, and
//! 12 significant digits so reruns are byte-stable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use markov_poisson::linalg::{DenseMatrix, DenseVector};
use markov_poisson::Error;

pub fn fmt_value(v: f64) -> String {
    format!("{v:.11e}")
}

/// Writes the CSV artifacts of one run into an output directory.
pub struct OutputWriter {
    dir: PathBuf,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self, Error> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_file(&self, name: &str, contents: &str) -> Result<PathBuf, Error> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", path.display())))?;
        file.write_all(contents.as_bytes())
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// `pi.csv`: one row per state with level/phase labels.
    pub fn write_pi(&self, pi: &DenseVector, block_size: usize) -> Result<PathBuf, Error> {
        let mut out = String::from("state_index,level,phase,pi\n");
        for s in 0..pi.len() {
            let (level, phase) = (s / block_size, s % block_size + 1);
            out.push_str(&format!("{s},{level},{phase},{}\n", fmt_value(pi[s])));
        }
        self.write_file("pi.csv", &out)
    }

    /// `xtilde.csv`: dense matrix in `(row_state, col_state, value)` triplets.
    pub fn write_matrix(&self, x: &DenseMatrix) -> Result<PathBuf, Error> {
        let mut out = String::from("row_state,col_state,value\n");
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                out.push_str(&format!("{r},{c},{}\n", fmt_value(x.get(r, c))));
            }
        }
        self.write_file("xtilde.csv", &out)
    }

    /// `f_values.csv`: the two forcing applications per state.
    pub fn write_f_values(
        &self,
        f_d: &DenseVector,
        f_k: &DenseVector,
        block_size: usize,
    ) -> Result<PathBuf, Error> {
        let mut out = String::from("state_index,level,phase,f_D,f_K\n");
        for s in 0..f_d.len() {
            let (level, phase) = (s / block_size, s % block_size + 1);
            out.push_str(&format!(
                "{s},{level},{phase},{},{}\n",
                fmt_value(f_d[s]),
                fmt_value(f_k[s])
            ));
        }
        self.write_file("f_values.csv", &out)
    }

    /// `diagnostics.csv`: key/value pairs in insertion order.
    pub fn write_diagnostics(&self, pairs: &[(String, String)]) -> Result<PathBuf, Error> {
        let mut out = String::from("key,value\n");
        for (k, v) in pairs {
            out.push_str(&format!("{k},{v}\n"));
        }
        self.write_file("diagnostics.csv", &out)
    }

    /// `model.json`: the exported model document.
    pub fn write_model(&self, json: &str) -> Result<PathBuf, Error> {
        self.write_file("model.json", &format!("{json}\n"))
    }
}
