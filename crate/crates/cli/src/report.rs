//! Plain-text and JSON tables from a run report.

use std::fs;
use std::path::Path;

use dynid::estimator::Metrics;
use serde::{Deserialize, Serialize};

use crate::pipeline::RunReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Columns padded to their widest cell.
    pub fn render(&self) -> String {
        let n = self.header.len();
        let mut width = vec![0usize; n];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: &[String]| {
            row.iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        let rule: String = width
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-");
        let mut out = format!("{}\n{}\n{}\n", self.title, line(&self.header), rule);
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.4}"),
        _ => "n/a".into(),
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// R² and RMSE cells for `name`; "n/a" when the target or metric is absent.
fn pair(m: Option<&Metrics>, name: &str) -> [String; 2] {
    let t = m.and_then(|m| m.get(name));
    [num(t.and_then(|t| t.r2)), num(t.map(|t| t.rmse))]
}

/// The five tables: dataset grid, architecture grid, friction per joint,
/// mass and COM per link, inertia per link and axis. The parameter tables
/// use the cell with the best validation R².
pub fn build_tables(report: &RunReport, dof: usize) -> Vec<Table> {
    let val = |c: &crate::pipeline::CellReport| c.val_metrics.clone();
    let dataset = Table {
        name: "dataset_grid".into(),
        title: "Dataset configurations (first architecture)".into(),
        header: header(&["Seq Len", "Stride", "SSR", "Effective Time (s)", "Utilization", "Val R2", "Val RMSE"]),
        rows: report
            .cells
            .iter()
            .filter(|c| c.arch_index == 0)
            .map(|c| {
                let m = val(c);
                vec![
                    c.cell.seq_len.to_string(),
                    c.cell.stride.to_string(),
                    c.cell.ssr.to_string(),
                    format!("{}", c.effective_time),
                    format!("{:.2}%", 100.0 * c.utilization),
                    num(m.as_ref().and_then(|m| m.mean_r2)),
                    num(m.as_ref().map(|m| m.mean_rmse)),
                ]
            })
            .collect(),
    };
    let arch = Table {
        name: "architecture_grid".into(),
        title: "Encoder architectures (first dataset configuration)".into(),
        header: header(&["Layers", "Heads", "Embedding Dim", "FF Dim", "Val R2", "Val RMSE"]),
        rows: report
            .cells
            .iter()
            .filter(|c| c.grid_index == 0)
            .map(|c| {
                let m = val(c);
                vec![
                    c.arch.n_layers.to_string(),
                    c.arch.n_heads.to_string(),
                    c.arch.d_model.to_string(),
                    c.arch.d_ff.to_string(),
                    num(m.as_ref().and_then(|m| m.mean_r2)),
                    num(m.as_ref().map(|m| m.mean_rmse)),
                ]
            })
            .collect(),
    };
    let best = report.best_cell().and_then(|c| c.val_metrics.as_ref());
    let friction = Table {
        name: "friction".into(),
        title: "Friction parameters (validation)".into(),
        header: header(&["Joint", "Coulomb R2", "Coulomb RMSE", "Viscous R2", "Viscous RMSE"]),
        rows: (0..dof)
            .map(|j| {
                let mut r = vec![format!("J{j}")];
                r.extend(pair(best, &format!("mu_c_J{j}")));
                r.extend(pair(best, &format!("mu_v_J{j}")));
                r
            })
            .collect(),
    };
    let mass = Table {
        name: "mass_com".into(),
        title: "Mass and COM parameters (validation)".into(),
        header: header(&["Link", "Mass R2", "Mass RMSE", "COM R2", "COM RMSE"]),
        rows: (2..=dof)
            .map(|l| {
                let mut r = vec![format!("L{l}")];
                r.extend(pair(best, &format!("mass_L{l}")));
                r.extend(pair(best, &format!("com_L{l}")));
                r
            })
            .collect(),
    };
    let inertia = Table {
        name: "inertia".into(),
        title: "Inertia parameters (validation)".into(),
        header: header(&["Link", "Ixx R2", "Ixx RMSE", "Iyy R2", "Iyy RMSE", "Izz R2", "Izz RMSE"]),
        rows: (1..=dof)
            .map(|l| {
                let mut r = vec![format!("L{l}")];
                for axis in ["Ixx", "Iyy"] {
                    if l == 1 {
                        r.extend(["-".to_string(), "-".to_string()]);
                    } else {
                        r.extend(pair(best, &format!("{axis}_L{l}")));
                    }
                }
                r.extend(pair(best, &format!("Izz_L{l}")));
                r
            })
            .collect(),
    };
    vec![dataset, arch, friction, mass, inertia]
}

fn write_if_changed(path: &Path, content: &[u8]) -> std::io::Result<bool> {
    if fs::read(path).map(|old| old == content).unwrap_or(false) {
        return Ok(false);
    }
    fs::write(path, content)?;
    Ok(true)
}

/// Writes `tables.txt` and its JSON twin `tables.json` into `dir`. Returns
/// whether either file changed.
pub fn emit_tables(report: &RunReport, dir: &Path, dof: usize) -> std::io::Result<bool> {
    fs::create_dir_all(dir)?;
    let tables = build_tables(report, dof);
    let text: String = tables.iter().map(|t| t.render()).collect::<Vec<_>>().join("\n");
    let json = serde_json::to_vec_pretty(&tables).expect("tables serialise");
    let a = write_if_changed(&dir.join("tables.txt"), text.as_bytes())?;
    let b = write_if_changed(&dir.join("tables.json"), &json)?;
    Ok(a || b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_aligns_columns() {
        let t = Table {
            name: "t".into(),
            title: "T".into(),
            header: header(&["a", "bbb"]),
            rows: vec![vec!["10".into(), "x".into()]],
        };
        assert_eq!(t.render(), "T\n a | bbb\n---+----\n10 |   x\n");
    }

    #[test]
    fn missing_values_are_na() {
        assert_eq!(num(None), "n/a");
        assert_eq!(num(Some(f64::NAN)), "n/a");
        assert_eq!(num(Some(0.86331)), "0.8633");
        assert_eq!(pair(None, "mass_L2"), ["n/a".to_string(), "n/a".to_string()]);
    }
}
