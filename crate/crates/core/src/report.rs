//! Experiment reports: best relative NLL differences, epsilon-ball tables,
//! FMS fraction curves and their areas.
//!
//! Result sets are split into groups: a set whose records carry `(j, k)`
//! pairs contributes one group per pair, any other set is one group. The
//! groups of sets without pairs form the baseline union.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{argmin_first, fms, fms_auc_values, fms_fraction_values, prob_within_eps_values, signed_rel_diff};
use crate::objective::{poisson_nll, DEFAULT_EPS};
use crate::record::ResultSet;
use crate::tensor::SparseCountTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub eps_list: Vec<f64>,
    /// Spacing of the threshold grid for the FMS fraction curves.
    pub t_step: f64,
    pub taus: Vec<f64>,
    pub nll_eps: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            t_step: 0.01,
            taus: vec![0.85, 0.95],
            nll_eps: DEFAULT_EPS,
        }
    }
}

/// A column of the report: a whole set or one `(j, k)` pair of a set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub name: String,
    pub set: String,
    pub pair: Option<(usize, usize)>,
    /// Exact NLL of every member, in set order.
    pub nlls: Vec<f64>,
    /// FMS of every member against the approximate MLE of the full union.
    pub fms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleRef {
    pub run_id: String,
    pub set: String,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub group: String,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub n: usize,
    pub min_delta_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    /// P-hat per group, in group order.
    pub values: Vec<f64>,
    /// Largest P-hat over the pair groups and the pair attaining it
    /// (`"all"` when every pair attains it).
    pub best_pair_value: Option<f64>,
    pub best_pair: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucRow {
    pub group: String,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub tau: f64,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    /// Approximate MLE of the full union, used for P-hat, Psi and AUC.
    pub mle: MleRef,
    /// Approximate MLE of the baseline union, used for the deltas.
    pub baseline_mle: MleRef,
    pub groups: Vec<Group>,
    pub deltas: Vec<DeltaRow>,
    pub epsball: Vec<EpsRow>,
    pub t_grid: Vec<f64>,
    /// `psi[i][g]` is the FMS fraction of group `g` at `t_grid[i]`.
    pub psi: Vec<Vec<f64>>,
    pub auc: Vec<AucRow>,
}

fn group_name(set: &str, pair: Option<(usize, usize)>) -> String {
    match pair {
        Some((j, k)) => format!("{set}_j{j}_k{k}"),
        None => set.to_string(),
    }
}

/// Builds the report for `sets`, given in union order.
pub fn build_report(x: &SparseCountTensor, sets: &[ResultSet], opts: &ReportOptions) -> Result<Report> {
    if sets.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptySet);
    }
    if !(opts.t_step > 0.0 && opts.t_step <= 1.0) {
        return Err(Error::InvalidArgument(format!("t_step must be in (0, 1], got {}", opts.t_step)));
    }

    // Full union in order, with exact NLLs.
    let mut members = Vec::new();
    for set in sets {
        for r in &set.records {
            members.push((set.label.as_str(), r, poisson_nll(x, &r.model, opts.nll_eps)?.value));
        }
    }
    let all_nlls: Vec<f64> = members.iter().map(|m| m.2).collect();
    let best = argmin_first(&all_nlls)?;
    let mle_model = &members[best].1.model;
    let mle_ref = |i: usize| MleRef {
        run_id: members[i].1.run_id.clone(),
        set: members[i].0.to_string(),
        nll: members[i].2,
    };

    let baseline: Vec<usize> = (0..members.len()).filter(|&i| members[i].1.pair.is_none()).collect();
    let baseline_best = if baseline.is_empty() {
        best
    } else {
        let nlls: Vec<f64> = baseline.iter().map(|&i| all_nlls[i]).collect();
        baseline[argmin_first(&nlls)?]
    };
    let f_star = members[best].2;
    let f_base = members[baseline_best].2;

    let mut groups: Vec<Group> = Vec::new();
    for (label, record, nll) in &members {
        let name = group_name(label, record.pair);
        let score = fms(mle_model, &record.model)?;
        match groups.iter_mut().find(|g| g.name == name) {
            Some(g) => {
                g.nlls.push(*nll);
                g.fms.push(score);
            }
            None => groups.push(Group {
                name,
                set: label.to_string(),
                pair: record.pair,
                nlls: vec![*nll],
                fms: vec![score],
            }),
        }
    }

    let mut deltas = Vec::new();
    for g in &groups {
        let min = g
            .nlls
            .iter()
            .map(|&f| signed_rel_diff(f, f_base))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        deltas.push(DeltaRow {
            group: g.name.clone(),
            j: g.pair.map(|p| p.0),
            k: g.pair.map(|p| p.1),
            n: g.nlls.len(),
            min_delta_r: min,
        });
    }

    let mut epsball = Vec::new();
    for &eps in &opts.eps_list {
        let values = groups
            .iter()
            .map(|g| prob_within_eps_values(f_star, &g.nlls, eps))
            .collect::<Result<Vec<_>>>()?;
        let paired: Vec<(usize, f64)> =
            groups.iter().zip(&values).enumerate().filter(|(_, (g, _))| g.pair.is_some()).map(|(i, (_, &v))| (i, v)).collect();
        let best_value = paired.iter().map(|p| p.1).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        let best_pair = best_value.map(|bv| {
            let hits: Vec<usize> = paired.iter().filter(|p| p.1 == bv).map(|p| p.0).collect();
            if hits.len() == paired.len() && paired.len() > 1 {
                "all".to_string()
            } else {
                let (j, k) = groups[hits[0]].pair.expect("paired group");
                format!("{j}:{k}")
            }
        });
        epsball.push(EpsRow { eps, values, best_pair_value: best_value, best_pair });
    }

    let steps = (1.0 / opts.t_step).round() as usize;
    let t_grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let psi = t_grid
        .iter()
        .map(|&t| groups.iter().map(|g| fms_fraction_values(&g.fms, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let mut auc = Vec::new();
    for g in &groups {
        for &tau in &opts.taus {
            let a = fms_auc_values(&g.fms, tau)?;
            auc.push(AucRow {
                group: g.name.clone(),
                j: g.pair.map(|p| p.0),
                k: g.pair.map(|p| p.1),
                tau,
                raw: a.raw,
                normalized: a.normalized,
            });
        }
    }

    Ok(Report {
        mle: mle_ref(best),
        baseline_mle: mle_ref(baseline_best),
        groups,
        deltas,
        epsball,
        t_grid,
        psi,
        auc,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Report {
    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn deltas_csv(&self) -> String {
        let mut s = String::from("group,j,k,n,min_delta_r\n");
        for r in &self.deltas {
            let _ = writeln!(s, "{},{},{},{},{}", r.group, opt(r.j), opt(r.k), r.n, r.min_delta_r);
        }
        s
    }

    pub fn epsball_csv(&self) -> String {
        let mut s = String::from("eps");
        for g in &self.groups {
            s.push(',');
            s.push_str(&g.name);
        }
        s.push_str(",best_pair_value,best_pair\n");
        for r in &self.epsball {
            let _ = write!(s, "{:e}", r.eps);
            for v in &r.values {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{}", opt(r.best_pair_value), opt(r.best_pair.clone()));
        }
        s
    }

    pub fn psi_csv(&self) -> String {
        let mut s = String::from("t");
        for g in &self.groups {
            s.push(',');
            s.push_str(&g.name);
        }
        s.push('\n');
        for (t, row) in self.t_grid.iter().zip(&self.psi) {
            let _ = write!(s, "{t}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn auc_csv(&self) -> String {
        let mut s = String::from("group,j,k,tau,raw,normalized\n");
        for r in &self.auc {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.group, opt(r.j), opt(r.k), r.tau, r.raw, r.normalized);
        }
        s
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct GroupSummary<'a> {
            name: &'a str,
            set: &'a str,
            pair: Option<(usize, usize)>,
            n: usize,
            best_nll: f64,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            mle: &'a MleRef,
            baseline_mle: &'a MleRef,
            groups: Vec<GroupSummary<'a>>,
        }
        let summary = Summary {
            mle: &self.mle,
            baseline_mle: &self.baseline_mle,
            groups: self
                .groups
                .iter()
                .map(|g| GroupSummary {
                    name: &g.name,
                    set: &g.set,
                    pair: g.pair,
                    n: g.nlls.len(),
                    best_nll: g.nlls.iter().copied().fold(f64::INFINITY, f64::min),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
    }

    /// Writes `deltas.csv`, `epsball.csv`, `psi.csv`, `auc.csv` and
    /// `summary.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("deltas.csv"), self.deltas_csv())?;
        fs::write(dir.join("epsball.csv"), self.epsball_csv())?;
        fs::write(dir.join("psi.csv"), self.psi_csv())?;
        fs::write(dir.join("auc.csv"), self.auc_csv())?;
        fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}
