//! CSV tables, JSON summaries and plot scripts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// 17 significant digits: enough to read every double back exactly.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// A column-major table with a `name [unit]` header.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[(S, &str)]) -> Self {
        Table {
            header: columns.iter().map(|(c, u)| format!("{} [{u}]", c.as_ref())).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| num(v)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes the artifacts of one subcommand into the output directory.
pub struct Sink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            written: vec![],
        })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        self.text(name, &table.render())
    }

    /// Write `<command>.json` holding the config and the results; returns
    /// the rendered text.
    pub fn summary<T: Serialize>(&mut self, command: &str, config: &RunConfig, results: &T, passed: bool) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a, T> {
            command: &'a str,
            passed: bool,
            config: &'a RunConfig,
            artifacts: Vec<String>,
            results: &'a T,
        }
        let artifacts = self
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        let mut body = serde_json::to_string_pretty(&Summary {
            command,
            passed,
            config,
            artifacts,
            results,
        })?;
        body.push('\n');
        self.text(&format!("{command}.json"), &body)?;
        Ok(body)
    }
}

/// A matplotlib script drawing `|u_*|`, `|S[u_*]|` and the weight envelope
/// per time on log-log axes from the residual table.
pub fn residual_plot_script(csv_name: &str, png_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "#!/usr/bin/env python3");
    let _ = writeln!(s, "# Draws the residual table written next to this script.");
    let _ = writeln!(s, "import csv, os");
    let _ = writeln!(s, "import matplotlib");
    let _ = writeln!(s, "matplotlib.use(\"Agg\")");
    let _ = writeln!(s, "import matplotlib.pyplot as plt");
    let _ = writeln!(s);
    let _ = writeln!(s, "here = os.path.dirname(os.path.abspath(__file__))");
    let _ = writeln!(s, "rows = {{}}");
    let _ = writeln!(s, "with open(os.path.join(here, \"{csv_name}\")) as f:");
    let _ = writeln!(s, "    reader = csv.reader(f)");
    let _ = writeln!(s, "    names = [h.split(\" [\")[0] for h in next(reader)]");
    let _ = writeln!(s, "    for rec in reader:");
    let _ = writeln!(s, "        r = dict(zip(names, map(float, rec)))");
    let _ = writeln!(s, "        rows.setdefault(r[\"t\"], []).append(r)");
    let _ = writeln!(s);
    let _ = writeln!(s, "fig, axes = plt.subplots(1, len(rows), figsize=(6 * len(rows), 4.5), squeeze=False)");
    let _ = writeln!(s, "for ax, (t, rs) in zip(axes[0], sorted(rows.items(), reverse=True)):");
    let _ = writeln!(s, "    rs = [r for r in rs if r[\"r\"] > 0]");
    let _ = writeln!(s, "    x = [r[\"r\"] for r in rs]");
    let _ = writeln!(s, "    ax.loglog(x, [abs(r[\"ustar\"]) for r in rs], label=\"|u*|\")");
    let _ = writeln!(s, "    ax.loglog(x, [abs(r[\"residual\"]) for r in rs], label=\"|S[u*]|\")");
    let _ = writeln!(s, "    ax.loglog(x, [abs(r[\"eout\"]) for r in rs], label=\"|E_out|\", lw=0.8)");
    let _ = writeln!(s, "    ax.loglog(x, [r[\"envelope\"] for r in rs], \"--\", label=\"weight envelope\")");
    let _ = writeln!(s, "    ax.set_title(\"t = %g\" % t)");
    let _ = writeln!(s, "    ax.set_xlabel(\"|x|\")");
    let _ = writeln!(s, "    ax.legend()");
    let _ = writeln!(s, "fig.tight_layout()");
    let _ = writeln!(s, "fig.savefig(os.path.join(here, \"{png_name}\"), dpi=150)");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_read_back_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 108.6543210987654] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn header_carries_units() {
        let mut t = Table::new(&[("r", "length"), ("u", "1")]);
        t.push_nums(&[1.0, 2.0]);
        let text = t.render();
        assert!(text.starts_with("r [length],u [1]\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
