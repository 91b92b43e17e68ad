use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hyperperiods::eigen::{
    hejhal_solve_with, load_cache, save_form, sphere_harmonic, torus_mode, Eigenfunction, MaassForm, Surface,
};
use hyperperiods::hypgeom::GroupElement;
use hyperperiods::io::write_atomic;
use hyperperiods::modelrep::{density_b, density_c, SpectralParam};
use hyperperiods::periods::{
    check_corollary, fit_restriction_exponent, period_pipeline, restrict, summarize, Curve, PeriodTable,
};
use hyperperiods::verify::{run_all, CriterionResult, Status};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Bracket, CurveSpec, Recipe, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SolvedForm {
    pub bracket: [f64; 2],
    pub parity: String,
    pub r: f64,
    pub r_check: f64,
    pub residual: f64,
    pub condition: f64,
    pub file: PathBuf,
}

fn csv_bytes(rows: &[Vec<String>], header: &[&str]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s.into_bytes()
}

fn slug(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    while out.contains("__") {
        out = out.replace("__", "_");
    }
    out.trim_matches('_').to_string()
}

fn bracket_met(b: &Bracket, forms: &[MaassForm]) -> bool {
    forms.iter().any(|f| f.parity == b.parity && (b.lo..=b.hi).contains(&f.r))
}

/// Solves every configured bracket and caches the forms.
pub fn solve(cfg: &RunConfig, cache: &Path, out: &Path) -> Result<Vec<SolvedForm>, CliError> {
    if cfg.brackets.is_empty() {
        eprintln!("warning: no eigenvalue brackets configured; nothing to solve");
        return Ok(Vec::new());
    }
    let opts = cfg.hejhal_options();
    let results: Vec<_> = cfg
        .brackets
        .par_iter()
        .map(|b| hejhal_solve_with((b.lo, b.hi), b.parity, &opts))
        .collect();
    let mut solved = Vec::new();
    let mut failed = 0;
    for (b, res) in cfg.brackets.iter().zip(results) {
        match res {
            Ok(form) => {
                let file = save_form(cache, &form)?;
                println!(
                    "solved {} form in [{}, {}]: R = {:.12}, residual {:.1e}, condition {:.1e}",
                    b.parity.tag(),
                    b.lo,
                    b.hi,
                    form.r,
                    form.residual,
                    form.condition
                );
                solved.push(SolvedForm {
                    bracket: [b.lo, b.hi],
                    parity: b.parity.tag().to_string(),
                    r: form.r,
                    r_check: form.r_check,
                    residual: form.residual,
                    condition: form.condition,
                    file,
                });
            }
            Err(e) => {
                eprintln!("error: {} bracket [{}, {}]: {e}", b.parity.tag(), b.lo, b.hi);
                failed += 1;
            }
        }
    }
    write_atomic(&out.join("solve_summary.json"), &json_bytes(&solved))?;
    if failed > 0 {
        return Err(CliError::SolveFailed {
            failed,
            total: cfg.brackets.len(),
        });
    }
    Ok(solved)
}

fn load_forms(cache: &Path) -> Result<Vec<Arc<MaassForm>>, CliError> {
    let forms = load_cache(cache)?;
    if forms.is_empty() {
        return Err(CliError::MissingCache(cache.to_path_buf()));
    }
    Ok(forms.into_iter().map(Arc::new).collect())
}

/// Eigenfunctions and curves of the configured surface.
fn surface_jobs(cfg: &RunConfig, cache: &Path) -> Result<(Vec<Eigenfunction>, Vec<Curve>), CliError> {
    let mut curves: Vec<Curve> = cfg
        .surface_curves()
        .into_iter()
        .map(CurveSpec::build)
        .collect::<hyperperiods::Result<_>>()?;
    let phis = match cfg.surface {
        Surface::Modular => load_forms(cache)?.into_iter().map(Eigenfunction::maass).collect(),
        Surface::Sphere => {
            if curves.is_empty() {
                curves.push(Curve::SphereEquator);
            }
            cfg.sphere_degrees
                .iter()
                .map(|&n| sphere_harmonic(n, n as i32))
                .collect::<hyperperiods::Result<_>>()?
        }
        Surface::Torus => {
            if curves.is_empty() {
                curves.push(Curve::torus_geodesic((1, 0), (0.0, 0.0))?);
            }
            cfg.torus_modes.iter().map(|k| torus_mode((k[0], k[1]))).collect()
        }
    };
    if curves.is_empty() {
        return Err(CliError::Config(format!("no curves configured for the {:?} surface", cfg.surface)));
    }
    Ok((phis, curves))
}

fn trimmed(table: &PeriodTable, n_max: i64) -> PeriodTable {
    let mut t = table.clone();
    t.p.retain(|n, _| n.abs() <= n_max);
    t.a.retain(|n, _| n.abs() <= n_max);
    t
}

fn periods_recipe(cfg: &RunConfig, cache: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (phis, curves) = surface_jobs(cfg, cache)?;
    let jobs: Vec<(usize, usize)> = (0..phis.len()).flat_map(|i| (0..curves.len()).map(move |j| (i, j))).collect();
    let tables: Vec<PeriodTable> = jobs
        .par_iter()
        .map(|&(i, j)| period_pipeline(&phis[i], &curves[j], cfg.density_threshold, &cfg.t_grid))
        .collect::<hyperperiods::Result<_>>()?;
    let mut written = Vec::new();
    let dir = out.join("periods");
    let mut ratio_rows = Vec::new();
    let mut by_curve: BTreeMap<usize, Vec<&PeriodTable>> = BTreeMap::new();
    for (&(i, j), table) in jobs.iter().zip(&tables) {
        let mut buf = Vec::new();
        trimmed(table, cfg.n_max).write_csv(&mut buf)?;
        let path = dir.join(format!("{}__{}.csv", phis[i].label(), slug(&curves[j].id())));
        write_atomic(&path, &buf)?;
        written.push(path);
        for (&t, &sum) in &table.partial_sums {
            ratio_rows.push(vec![
                table.label.clone(),
                table.curve.id(),
                format!("{:e}", table.mu),
                t.to_string(),
                format!("{sum:e}"),
                format!("{:e}", sum / (t as f64).max(table.mu.sqrt())),
            ]);
        }
        by_curve.entry(j).or_default().push(table);
    }
    let path = out.join("ratios.csv");
    write_atomic(
        &path,
        &csv_bytes(&ratio_rows, &["label", "curve", "mu", "T", "partial_sum", "ratio"]),
    )?;
    written.push(path);

    // Restriction exponents per curve: a least-squares fit when the spectrum
    // is wide enough, and the single-constant corollary check always.
    let mut fit_rows = Vec::new();
    let mut corollary_rows = Vec::new();
    for (j, group) in &by_curve {
        let curve = &curves[*j];
        let pairs: Vec<(f64, f64)> = group.iter().map(|t| (t.mu, t.restriction_norm_sqr)).collect();
        let exponent = match curve {
            Curve::Circle(_) => 1.0 / 6.0,
            _ => 0.25,
        };
        match fit_restriction_exponent(&pairs) {
            Ok(fit) => fit_rows.push(vec![
                curve.id(),
                pairs.len().to_string(),
                format!("{:.6}", fit.exponent),
                format!("{:e}", fit.constant),
                format!("{:e}", fit.residual),
                String::new(),
            ]),
            Err(e) => fit_rows.push(vec![
                curve.id(),
                pairs.len().to_string(),
                String::new(),
                String::new(),
                String::new(),
                e.to_string(),
            ]),
        }
        if let Ok(report) = check_corollary(&pairs, exponent, cfg.tolerances.corollary_slack) {
            for (t, ratio) in group.iter().zip(&report.ratios) {
                corollary_rows.push(vec![
                    curve.id(),
                    t.label.clone(),
                    format!("{:e}", t.mu),
                    format!("{:e}", t.restriction_norm_sqr),
                    format!("{exponent:.6}"),
                    format!("{ratio:.6}"),
                ]);
            }
        }
    }
    for (name, rows, header) in [
        (
            "fits.csv",
            fit_rows,
            &["curve", "count", "slope", "constant", "max_residual", "note"][..],
        ),
        (
            "corollary.csv",
            corollary_rows,
            &["curve", "label", "mu", "restriction_norm_sqr", "exponent", "ratio"][..],
        ),
    ] {
        let path = out.join(name);
        write_atomic(&path, &csv_bytes(&rows, header))?;
        written.push(path);
    }
    let summary: Vec<_> = tables.iter().map(|t| summarize(t, &cfg.t_grid)).collect();
    let path = out.join("summary.json");
    write_atomic(&path, &json_bytes(&summary))?;
    written.push(path);
    Ok(written)
}

fn sphere_recipe(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows: Vec<(u32, f64, f64)> = cfg
        .sphere_degrees
        .par_iter()
        .map(|&n| {
            let phi = sphere_harmonic(n, n as i32)?;
            Ok((n, phi.mu, restrict(&phi, &Curve::SphereEquator)?.norm_sqr()))
        })
        .collect::<hyperperiods::Result<_>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, r.2)).collect();
    let fit = fit_restriction_exponent(&pairs)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(n, mu, p)| {
            vec![
                n.to_string(),
                format!("{mu:e}"),
                format!("{p:e}"),
                format!("{:.6}", fit.exponent),
                format!("{:e}", fit.constant),
            ]
        })
        .collect();
    let path = out.join("sphere_sharpness.csv");
    write_atomic(&path, &csv_bytes(&table, &["n", "mu", "p", "slope", "constant"]))?;
    Ok(vec![path])
}

fn density_recipe(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let d = &cfg.density;
    let range = (-d.n_max, d.n_max);
    let g = GroupElement::diagonal(d.circle_dilation)?;
    let dir = out.join("densities");
    let mut written = Vec::new();
    for &t in &d.t {
        let param = SpectralParam::principal(t);
        let mut tables = Vec::new();
        for &q in &d.q {
            tables.push((format!("density_b_t{t}_q{q:.6}.csv"), density_b(param, q, range)?));
        }
        tables.push((
            format!("density_c_t{t}_a{}.csv", d.circle_dilation),
            density_c(param, &g, range)?,
        ));
        for (name, table) in tables {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            let path = dir.join(name);
            write_atomic(&path, &buf)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Runs the configured recipes; returns the files written.
pub fn sweep(cfg: &RunConfig, cache: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut recipes = cfg.recipes.clone();
    recipes.sort();
    recipes.dedup();
    let mut written = Vec::new();
    for r in recipes {
        written.extend(match r {
            Recipe::Periods => periods_recipe(cfg, cache, out)?,
            Recipe::SphereSharpness => sphere_recipe(cfg, out)?,
            Recipe::DensityRegimes => density_recipe(cfg, out)?,
        });
    }
    Ok(written)
}

/// Runs the acceptance suite. Forms come from the cache; an empty cache is
/// filled by solving the configured brackets, and a cache covering only
/// some brackets restricts the run to cache-independent checks.
pub fn verify(cfg: &RunConfig, cache: &Path, out: &Path) -> Result<Vec<CriterionResult>, CliError> {
    let cached = load_cache(cache)?;
    let forms: Vec<Arc<MaassForm>> = if cached.is_empty() {
        eprintln!("cache {} is empty; solving {} brackets", cache.display(), cfg.brackets.len());
        solve(cfg, cache, out)?;
        load_forms(cache)?
    } else if cfg.brackets.iter().all(|b| bracket_met(b, &cached)) {
        cached.into_iter().map(Arc::new).collect()
    } else {
        eprintln!("cache {} covers only some brackets; Maass-dependent checks are skipped", cache.display());
        Vec::new()
    };
    let results = run_all(&cfg.tolerances, &forms);
    for r in &results {
        println!("{r}");
    }
    write_atomic(&out.join("verify.json"), &json_bytes(&results))?;
    let failing: Vec<String> = results
        .iter()
        .filter(|r| r.status != Status::Pass)
        .map(|r| format!("{} ({})", r.name, if r.status == Status::Fail { "fail" } else { "skipped" }))
        .collect();
    if failing.is_empty() {
        Ok(results)
    } else {
        Err(CliError::VerificationFailed(failing.join(", ")))
    }
}
