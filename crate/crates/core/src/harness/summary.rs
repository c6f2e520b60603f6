//! Result rows and grouped mean/std tables.

use std::fmt::Write as _;

use serde::Serialize;

/// One reconstruction of one (image, grid, alpha, solver) tuple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub image: String,
    pub solver: String,
    pub grid: (usize, usize),
    pub alpha: f64,
    pub overlap: f64,
    pub psnr_a: f64,
    pub psnr_phi: f64,
    pub iterations: usize,
    pub final_residual: f64,
    /// Empty when the tuple succeeded.
    pub error: String,
    pub wall_time: f64,
}

pub const CSV_HEADER: &str =
    "image,solver,grid,alpha,overlap,psnr_a,psnr_phi,iterations,final_residual,error,wall_time";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn grid_label(grid: (usize, usize)) -> String {
    format!("{}x{}", grid.0, grid.1)
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    /// CSV line without trailing newline; `wall_time` is the last column.
    pub fn to_csv(&self) -> String {
        let num = |v: f64| if self.ok() { format!("{v:.4}") } else { String::new() };
        format!(
            "{},{},{},{},{:.4},{},{},{},{},{},{:.3}",
            csv_field(&self.image),
            csv_field(&self.solver),
            grid_label(self.grid),
            self.alpha,
            self.overlap,
            num(self.psnr_a),
            num(self.psnr_phi),
            self.iterations,
            if self.ok() { format!("{:.6e}", self.final_residual) } else { String::new() },
            csv_field(&self.error),
            self.wall_time,
        )
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub solver: String,
    pub grid: (usize, usize),
    pub alpha: f64,
    /// Successful tuples in the group.
    pub count: usize,
    pub failed: usize,
    pub psnr_a: Option<MeanStd>,
    pub psnr_phi: Option<MeanStd>,
    /// Highest mean amplitude PSNR among solvers at this (grid, alpha).
    pub best_a: bool,
    pub best_phi: bool,
}

/// Groups rows by (solver, grid, alpha) in order of first appearance and
/// marks the best solver for each (grid, alpha) setting.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, (usize, usize), f64, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|g| g.0 == r.solver && g.1 == r.grid && g.2 == r.alpha)
        {
            Some(g) => g.3.push(r),
            None => groups.push((r.solver.clone(), r.grid, r.alpha, vec![r])),
        }
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|(solver, grid, alpha, members)| {
            let good: Vec<&ResultRow> = members.iter().copied().filter(|r| r.ok()).collect();
            let a: Vec<f64> = good.iter().map(|r| r.psnr_a).collect();
            let p: Vec<f64> = good.iter().map(|r| r.psnr_phi).collect();
            SummaryRow {
                solver,
                grid,
                alpha,
                count: good.len(),
                failed: members.len() - good.len(),
                psnr_a: MeanStd::of(&a),
                psnr_phi: MeanStd::of(&p),
                best_a: false,
                best_phi: false,
            }
        })
        .collect();
    mark_best(&mut out, |s| s.psnr_a, |s| &mut s.best_a);
    mark_best(&mut out, |s| s.psnr_phi, |s| &mut s.best_phi);
    out
}

fn mark_best(
    rows: &mut [SummaryRow],
    value: impl Fn(&SummaryRow) -> Option<MeanStd>,
    flag: impl Fn(&mut SummaryRow) -> &mut bool,
) {
    for i in 0..rows.len() {
        let Some(v) = value(&rows[i]) else { continue };
        let beaten = rows.iter().any(|o| {
            o.grid == rows[i].grid
                && o.alpha == rows[i].alpha
                && value(o).is_some_and(|w| w.mean > v.mean)
        });
        *flag(&mut rows[i]) = !beaten;
    }
}

fn fmt_stat(s: Option<MeanStd>) -> (String, String) {
    match s {
        Some(s) => (format!("{:.2}", s.mean), format!("{:.2}", s.std)),
        None => (String::new(), String::new()),
    }
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "solver,grid,alpha,count,failed,psnr_a_mean,psnr_a_std,psnr_phi_mean,psnr_phi_std,best_a,best_phi\n",
    );
    for s in rows {
        let (am, asd) = fmt_stat(s.psnr_a);
        let (pm, psd) = fmt_stat(s.psnr_phi);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{am},{asd},{pm},{psd},{},{}",
            csv_field(&s.solver),
            grid_label(s.grid),
            s.alpha,
            s.count,
            s.failed,
            u8::from(s.best_a),
            u8::from(s.best_phi),
        );
    }
    out
}

/// Aligned plain-text table; the best entry per setting carries a `*`.
pub fn summary_to_text(rows: &[SummaryRow]) -> String {
    let cell = |s: Option<MeanStd>, best: bool| match s {
        Some(s) => format!("{:.2} ± {:.2}{}", s.mean, s.std, if best { " *" } else { "" }),
        None => "n/a".to_string(),
    };
    let header = ["solver", "grid", "alpha", "n", "PSNR_a [dB]", "PSNR_phi [dB]"].map(String::from);
    let mut table = vec![header.to_vec()];
    for s in rows {
        table.push(vec![
            s.solver.clone(),
            grid_label(s.grid),
            format!("{}", s.alpha),
            if s.failed > 0 {
                format!("{} ({} failed)", s.count, s.failed)
            } else {
                s.count.to_string()
            },
            cell(s.psnr_a, s.best_a),
            cell(s.psnr_phi, s.best_phi),
        ]);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}", w = *w))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}
