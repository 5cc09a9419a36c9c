//! The batch commands. Each writes its files under the output directory and
//! returns the list of written paths.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use finsec::linalg::fmt17;
use finsec::linemodels::matrix_to_csv;
use finsec::localsym::{
    check_local_invertibility, fiber_points, local_symbol_seq, LocalPoint, PointKind,
};
use finsec::opexpr::normalize;
use finsec::sections::sv_sweep;
use finsec::stability::{stability_report, LocalEvidence, StabilityConfig};
use finsec::symbolmaps::{
    assemble_seq, map_p, map_u, map_w, strong_limit_oracle, Limit, Probe, SeqExpr,
};

use crate::config::RunConfig;
use crate::failure::Failure;

pub struct Output {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Validation(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| {
                Failure::Validation(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
        fs::write(&path, contents)
            .map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}

fn require_expressions(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.expressions.is_empty() {
        return Err(Failure::Validation(
            "the config defines no expressions".into(),
        ));
    }
    Ok(())
}

fn kind_name(p: &LocalPoint) -> &'static str {
    match p.kind {
        PointKind::PlusOne => "plus_one",
        PointKind::Interior => "interior",
        PointKind::MinusOne => "minus_one",
    }
}

/// Section matrices `A_n` for every expression and every `n`.
pub fn sections(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    require_expressions(cfg)?;
    let mut index = String::from("name,n,rows,file\n");
    for (name, s) in &cfg.expressions {
        for &n in &cfg.params.ns {
            let m = assemble_seq(s, n, cfg.params.margin)?;
            let file = format!("sections/{name}_n{n}.csv");
            out.write(&file, &matrix_to_csv(m.data()))?;
            writeln!(index, "{name},{n},{},{file}", m.data().nrows()).unwrap();
        }
    }
    out.write("sections/index.csv", &index)
}

/// `σ_min` and condition numbers of `A_n` over `ns`.
pub fn sweep(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    require_expressions(cfg)?;
    for (name, s) in &cfg.expressions {
        let r = sv_sweep(|n| assemble_seq(s, n, cfg.params.margin), &cfg.params.ns)?;
        out.write(&format!("sweep_{name}.csv"), &r.to_csv())?;
    }
    Ok(())
}

/// Limit operators and their strong-limit residuals.
pub fn maps(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    require_expressions(cfg)?;
    let w = cfg.params.probe_window;
    for (name, s) in &cfg.expressions {
        let d = s.validate()?.unwrap_or(1);
        let p = normalize(&map_p(s)?)?;
        let wl = normalize(&map_w(s)?)?;
        let mut text = format!("expression = {s}\np_limit = {p}\nw_limit = {wl}\n");
        if let SeqExpr::Section(a) = s {
            writeln!(text, "u_image = {}", map_u(a)?).unwrap();
        }
        writeln!(text, "probe_window = {w}").unwrap();
        out.write(&format!("maps_{name}.txt"), &text)?;

        let probes = Probe::basis(d, w);
        let mut csv = String::from("n,limit,residual\n");
        for &n in cfg.params.ns.iter().filter(|&&n| n >= w) {
            for (label, limit, pred) in [("P", Limit::P, &p), ("W", Limit::W, &wl)] {
                let r = strong_limit_oracle(s, pred, limit, n, w, &probes)?;
                writeln!(csv, "{n},{label},{}", fmt17(r)).unwrap();
            }
        }
        out.write(&format!("maps_{name}.csv"), &csv)?;
    }
    Ok(())
}

fn local_csv(list: &[&LocalEvidence]) -> String {
    let mut csv = String::from("point,kind,tau,cells,sigma_min,verdict\n");
    for e in list {
        for r in &e.check.rows {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                e.point,
                kind_name(&e.point),
                fmt17(e.point.tau),
                r.cells,
                fmt17(r.sigma_min),
                e.check.verdict
            )
            .unwrap();
        }
    }
    csv
}

/// Local symbols at every fiber point and their invertibility checks.
pub fn local(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    require_expressions(cfg)?;
    for (name, s) in &cfg.expressions {
        let mut evidence = Vec::new();
        for point in fiber_points(s) {
            let symbol = local_symbol_seq(s, &point)?;
            let check = check_local_invertibility(&symbol, &cfg.params.grids, cfg.params.floor)?;
            evidence.push(LocalEvidence {
                point,
                symbol,
                check,
            });
        }
        let mut text = format!("expression = {s}\ncount = {}\n", evidence.len());
        for e in &evidence {
            writeln!(
                text,
                "[point]\npoint = {}\nsymbol = {}\nmethod = trend-heuristic\nverdict = {}",
                e.point, e.symbol, e.check.verdict
            )
            .unwrap();
        }
        out.write(&format!("local_{name}.txt"), &text)?;
        out.write(
            &format!("local_{name}.csv"),
            &local_csv(&evidence.iter().collect::<Vec<_>>()),
        )?;
    }
    Ok(())
}

/// Full stability report plus one CSV per evidence table.
pub fn report(cfg: &RunConfig, out: &mut Output) -> Result<(), Failure> {
    require_expressions(cfg)?;
    let config = StabilityConfig {
        floor: cfg.params.floor,
        windows: cfg.params.windows.clone(),
        local_grids: cfg.params.grids.clone(),
        margin: cfg.params.margin,
        extra_points: Vec::new(),
    };
    for (name, s) in &cfg.expressions {
        let r = stability_report(s, &config)?;
        let text = format!("expression = {s}\n{}", r.to_text());
        out.write(&format!("report_{name}.txt"), &text)?;
        out.write(&format!("report_{name}_cond_a.csv"), &r.cond_a.to_csv())?;
        out.write(&format!("report_{name}_cond_b.csv"), &r.cond_b.to_csv())?;
        out.write(
            &format!("report_{name}_cond_c.csv"),
            &local_csv(&r.cond_c.iter().collect::<Vec<_>>()),
        )?;
        out.write(
            &format!("report_{name}_cond_d.csv"),
            &local_csv(&r.cond_d.iter().collect::<Vec<_>>()),
        )?;
        out.write(&format!("report_{name}_observed.csv"), &r.observed.to_csv())?;
    }
    Ok(())
}
