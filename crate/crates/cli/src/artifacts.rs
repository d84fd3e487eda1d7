//! Output directory bookkeeping: every written file is recorded so that the
//! MANIFEST can hash it at the end of the run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use stablab_core::fem::Field;
use stablab_core::levelset::PoincareBreakdown;
use stablab_core::stability::StabilityReport;

pub struct Artifacts {
    root: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `contents` to `rel` (a `/`-separated path under the root).
    pub fn write(&mut self, rel: &str, contents: &str) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
        Ok(())
    }

    /// Writes `MANIFEST`: a timestamp line, then `sha256  path` sorted by path.
    pub fn finish(mut self) -> io::Result<PathBuf> {
        self.written.sort();
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut out = format!("# generated {stamp}\n");
        for rel in &self.written {
            let bytes = fs::read(self.root.join(rel))?;
            let _ = writeln!(out, "{}  {rel}", hex(&Sha256::digest(&bytes)));
        }
        let path = self.root.join("MANIFEST");
        fs::write(&path, out)?;
        Ok(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Anything that renders as whitespace-separated columns under a
/// `# name[unit] ...` header, rows ordered by node (or test) index.
pub enum PlotData<'a> {
    Field(&'a Field<f64>),
    /// Sorted keys on the header line, values on the second.
    Stability(&'a StabilityReport<f64>),
    /// One row per test function.
    Poincare(&'a [PoincareBreakdown<f64>]),
    /// A table already rendered with its header.
    Table(&'a str),
}

pub fn emit_plot_data(out: &mut Artifacts, data: PlotData<'_>, rel: &str) -> io::Result<()> {
    let text = match data {
        PlotData::Field(f) => f.to_table(),
        PlotData::Stability(s) => format!(
            "# classification[-] eig_residual[-] lambda_min[1/L^2] tolerance[1/L^2]\n{} {:.6e} {:.12e} {:.6e}\n",
            s.classification, s.eig_residual, s.lambda_min, s.tolerance
        ),
        PlotData::Poincare(rows) => {
            let mut s = String::from("# test[-]");
            for c in PoincareBreakdown::<f64>::COLUMNS {
                let _ = write!(s, " {c}[U^2/L^2]");
            }
            s.push('\n');
            for (k, b) in rows.iter().enumerate() {
                let _ = write!(s, "{k}");
                for v in b.values() {
                    let _ = write!(s, " {v:.10e}");
                }
                s.push('\n');
            }
            s
        }
        PlotData::Table(t) => t.to_string(),
    };
    out.write(rel, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stablab_core::mesh::{generate, DomainSpec};
    use std::sync::Arc;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("stablab-artifacts-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn constant_field_is_single_valued() {
        let dir = scratch("const");
        let mut out = Artifacts::create(&dir).unwrap();
        let mesh = Arc::new(generate::<f64>(&DomainSpec::disk(1.0, 0.3)).unwrap());
        let f = Field::constant(mesh.clone(), 2.5);
        emit_plot_data(&mut out, PlotData::Field(&f), "u.dat").unwrap();
        let text = fs::read_to_string(dir.join("u.dat")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# node[-] value[U]"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), mesh.n_nodes());
        for (i, r) in rows.iter().enumerate() {
            let cols: Vec<_> = r.split_whitespace().collect();
            assert_eq!(cols[0], i.to_string());
            assert_eq!(cols[1].parse::<f64>().unwrap(), 2.5);
        }
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn poincare_columns_in_order() {
        let dir = scratch("poincare");
        let mut out = Artifacts::create(&dir).unwrap();
        let b = PoincareBreakdown {
            interior_lhs: 1.0,
            boundary_term: 2.0,
            rhs: 3.0,
            slack: 0.0,
            hessian_form_lhs: 4.0,
            weighted_form: 5.0,
            critical_boundary_nodes: Vec::new(),
            masked_nodes: 0,
        };
        emit_plot_data(&mut out, PlotData::Poincare(std::slice::from_ref(&b)), "p.dat").unwrap();
        let text = fs::read_to_string(dir.join("p.dat")).unwrap();
        let head: Vec<_> = text.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(
            head,
            [
                "#",
                "test[-]",
                "interior_lhs[U^2/L^2]",
                "boundary_term[U^2/L^2]",
                "rhs[U^2/L^2]",
                "slack[U^2/L^2]",
                "hessian_form_lhs[U^2/L^2]"
            ]
        );
        let row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split_whitespace()
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(row, [0.0, 1.0, 2.0, 3.0, 0.0, 4.0]);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn manifest_sorted_with_hashes() {
        let dir = scratch("manifest");
        let mut out = Artifacts::create(&dir).unwrap();
        out.write("b.csv", "x\n").unwrap();
        out.write("a/c.csv", "y\n").unwrap();
        out.finish().unwrap();
        let text = fs::read_to_string(dir.join("MANIFEST")).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with("# generated "));
        assert!(lines[1].ends_with("  a/c.csv"));
        assert!(lines[2].ends_with("  b.csv"));
        // sha256sum of "x\n"
        assert_eq!(
            lines[2],
            "73cb3858a687a8494ca3323053016282f3dad39d42cf62ca4e79dda2aac7d9ac  b.csv"
        );
        fs::remove_dir_all(dir).unwrap();
    }
}
