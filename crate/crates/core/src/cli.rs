//! Command-line frontend. [`run`] returns a [`Report`] instead of exiting so
//! the commands can be driven from tests.

use crate::abp::{abp_certificate, AbpOptions};
use crate::certificate::Certificate;
use crate::config::RunConfig;
use crate::corpus::Builtin;
use crate::density::{alpha_chain_check, observed_rate, parse_j_list, DensityFamily};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::functionals::sobolev_deficit;
use crate::grid::BallGrid;
use crate::io::{abp_solution_csv, csv_string, density_csv, field_csv, plan_csv, read_field_csv, write_atomic};
use crate::isoperimetric::{parse_off, parse_polygon, Region};
use crate::knothe::{knothe_certificate, CertificateOptions};
use crate::surface::{
    defining_function_invariance, first_variation_check, levelset_parametric_agreement, mean_curvature_levelset,
    michael_simon_deficit, minimal_isoperimetric_check, surface_corpus, field_corpus, Chart, LevelSetSurface,
    ParametricSurface, ScalarJet, SurfaceField, TabulatedSurface, VectorField, SOBOLEV_CONSTANT_2,
};
use crate::transport::{transport_certificate, TransportOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Default grid spacing for grid commands.
pub const DEFAULT_H: f64 = 1.0 / 32.0;
/// Allowed relative gap between chain endpoints of two proof paths.
pub const COMPARISON_TOLERANCE: f64 = 0.02;

#[derive(Debug, Parser)]
#[command(name = "sobolev-lab", version, about = "Certificates for sharp Sobolev and isoperimetric inequalities")]
pub struct Cli {
    /// Report directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Multiplies every discretization tolerance.
    #[arg(long, global = true)]
    pub tol_scale: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat TOML file with the same keys as the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Dimension, 2 or 3.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid spacing, e.g. `1/64`.
    #[arg(long)]
    pub h: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deficits over the function corpus or of a shape.
    Verify {
        subject: Subject,
        #[command(flatten)]
        grid: GridArgs,
        /// `builtin` for the whole corpus, or one item name.
        #[arg(long)]
        corpus: Option<String>,
        /// `square`, `disk`, `disk:N`, `cube`, or a polygon / OFF file.
        #[arg(long)]
        shape: Option<String>,
    },
    /// Certificates of one or more proof paths for one function.
    Proof {
        #[arg(required = true, num_args = 1..)]
        paths: Vec<ProofKind>,
        /// Builtin corpus item or a CSV field file `x1..xn,f`.
        #[arg(long)]
        f: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
        /// Exact network simplex for transport (small grids only).
        #[arg(long)]
        exact: bool,
    },
    /// Checks on parametric surfaces.
    Surface {
        check: SurfaceCheck,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        h_band: Option<f64>,
        /// Surface field (michael-simon) or vector field (first-variation).
        #[arg(long)]
        field: Option<String>,
        /// Tabulated chart CSV `s,t,x,y,z`; isoperimetric only.
        #[arg(long)]
        chart: Option<PathBuf>,
    },
    /// Table of the density constants.
    Density {
        /// `1,10,100` or `1-20`.
        #[arg(long)]
        j: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subject {
    Sobolev,
    Isoperimetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum ProofKind {
    Knothe,
    Transport,
    Abp,
}

impl ProofKind {
    fn name(self) -> &'static str {
        match self {
            ProofKind::Knothe => "knothe",
            ProofKind::Transport => "transport",
            ProofKind::Abp => "abp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SurfaceCheck {
    MichaelSimon,
    Isoperimetric,
    FirstVariation,
    Curvature,
}

/// Outcome of one command: overall pass, written files, lines for stdout
/// and notices for stderr.
#[derive(Debug, Default)]
pub struct Report {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub stdout: Vec<String>,
    pub notices: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    report: Report,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Writer {
            dir,
            report: Report {
                pass: true,
                ..Default::default()
            },
        }
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(sanitize(name));
        write_atomic(&p, bytes)?;
        self.report.files.push(p);
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.file(name, text.as_bytes())
    }

    fn certificate(&mut self, name: &str, cert: &Certificate) -> Result<()> {
        self.report.pass &= cert.pass;
        if !cert.pass {
            self.report
                .notices
                .push(format!("{name}: failed stages {}", cert.failed_stages().join(", ")));
        }
        self.json(name, cert)
    }

    fn summary<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let text = csv_string(rows)?;
        self.report.stdout.extend(text.lines().map(String::from));
        self.file(name, text.as_bytes())
    }

    fn notice(&mut self, msg: impl Into<String>) {
        self.report.notices.push(msg.into());
    }

    /// Timestamps go to a separate file so certificates stay byte-identical.
    fn finish(mut self, command: &str) -> Result<Report> {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = serde_json::json!({
            "command": command,
            "unix_time": secs,
            "version": env!("CARGO_PKG_VERSION"),
            "pass": self.report.pass,
        });
        self.json("metadata.json", &meta)?;
        Ok(self.report)
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

/// Parses the arguments and runs the command.
pub fn run_from<I, T>(args: I) -> Result<Report>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<Report> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut flags = RunConfig {
        out: cli.out.clone(),
        tol_scale: cli.tol_scale,
        seed: cli.seed,
        ..Default::default()
    };
    match &cli.command {
        Command::Verify { grid, corpus, shape, .. } => {
            flags.n = grid.n;
            flags.h = grid.h.clone();
            flags.corpus = corpus.clone();
            flags.shape = shape.clone();
        }
        Command::Proof { f, grid, exact, .. } => {
            flags.n = grid.n;
            flags.h = grid.h.clone();
            flags.f = f.clone();
            flags.exact = exact.then_some(true);
        }
        Command::Surface {
            name,
            r,
            h_band,
            field,
            chart,
            ..
        } => {
            flags.name = name.clone();
            flags.r = *r;
            flags.h_band = *h_band;
            flags.field = field.clone();
            flags.chart = chart.clone();
        }
        Command::Density { j } => flags.j = j.clone(),
    }
    let cfg = file.merged(&flags);
    cfg.tol_scale()?;
    match cli.command {
        Command::Verify {
            subject: Subject::Sobolev,
            ..
        } => verify_sobolev(&cfg),
        Command::Verify {
            subject: Subject::Isoperimetric,
            ..
        } => verify_isoperimetric(&cfg),
        Command::Proof { paths, .. } => proof(&cfg, &paths),
        Command::Surface { check, .. } => surface(&cfg, check),
        Command::Density { .. } => density(&cfg),
    }
}

fn grid_from(cfg: &RunConfig) -> Result<std::sync::Arc<BallGrid>> {
    let n = cfg.n.unwrap_or(2);
    let h = cfg.resolution(DEFAULT_H)?;
    Ok(std::sync::Arc::new(BallGrid::new(n, h)?))
}

fn verify_sobolev(cfg: &RunConfig) -> Result<Report> {
    let grid = grid_from(cfg)?;
    let items: Vec<Builtin> = match cfg.corpus.as_deref().unwrap_or("builtin") {
        "builtin" | "all" => Builtin::ALL.to_vec(),
        name => vec![Builtin::parse(name)?],
    };
    #[derive(Serialize)]
    struct Row {
        item: String,
        n: usize,
        h: f64,
        grad_l1: f64,
        boundary_l1: f64,
        lq_norm: f64,
        lhs: f64,
        rhs: f64,
        deficit: f64,
        relative_deficit: f64,
        status: &'static str,
    }
    let results: Vec<_> = items
        .iter()
        .map(|b| b.field(grid.clone()).and_then(|f| sobolev_deficit(&f)))
        .collect::<Result<_>>()?;
    let mut w = Writer::new(cfg.out_dir());
    let mut rows = Vec::new();
    for (b, r) in items.iter().zip(&results) {
        w.report.pass &= r.status.is_pass();
        w.json(&format!("sobolev_{}.json", b.name()), r)?;
        rows.push(Row {
            item: b.name().to_string(),
            n: r.dim,
            h: r.h,
            grad_l1: r.grad_l1,
            boundary_l1: r.boundary_l1,
            lq_norm: r.lq_norm,
            lhs: r.lhs,
            rhs: r.rhs,
            deficit: r.deficit,
            relative_deficit: r.relative_deficit(),
            status: r.status.label(),
        });
    }
    w.summary("verify_sobolev.csv", &rows)?;
    w.finish("verify sobolev")
}

fn load_region(shape: &str) -> Result<Region> {
    let path = Path::new(shape);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        if path.extension().and_then(|e| e.to_str()) == Some("off") {
            parse_off(&text)
        } else {
            parse_polygon(&text)
        }
    } else {
        Region::builtin(shape)
    }
}

fn verify_isoperimetric(cfg: &RunConfig) -> Result<Report> {
    let shape = cfg.shape.as_deref().unwrap_or("square");
    let region = load_region(shape)?;
    let rep = region.deficit()?;
    #[derive(Serialize)]
    struct Row<'a> {
        shape: &'a str,
        dim: usize,
        volume: f64,
        perimeter: f64,
        deficit: f64,
        pass: bool,
    }
    let pass = rep.deficit >= -1e-12 * rep.perimeter;
    let mut w = Writer::new(cfg.out_dir());
    w.report.pass = pass;
    w.json(&format!("isoperimetric_{shape}.json"), &rep)?;
    w.summary(
        "verify_isoperimetric.csv",
        &[Row {
            shape,
            dim: rep.dim,
            volume: rep.volume,
            perimeter: rep.perimeter,
            deficit: rep.deficit,
            pass,
        }],
    )?;
    w.finish("verify isoperimetric")
}

fn load_field(cfg: &RunConfig) -> Result<(String, ScalarField)> {
    let spec = cfg.f.as_deref().unwrap_or("bump1");
    let path = Path::new(spec);
    if spec.ends_with(".csv") || path.is_file() {
        let grid = grid_from(cfg)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("field").to_string();
        Ok((stem, read_field_csv(path, grid)?))
    } else {
        let b = Builtin::parse(spec)?;
        let grid = grid_from(cfg)?;
        Ok((b.name().to_string(), b.field(grid)?))
    }
}

/// A chain quantity reported by a certificate.
struct Quantity {
    key: &'static str,
    value: f64,
    gated: bool,
    /// Compared by absolute difference (already a ratio) instead of
    /// relative gap.
    absolute: bool,
}

/// Chain quantities shared across paths. The relative deficit
/// `1 - n ∫ f^{n/(n-1)} / (∫_∂B f + ∫|∇f|)` is scale invariant and common to
/// all three paths. The endpoints themselves are shared by the two transport
/// paths, which normalize `f` the same way. `n ∫ f det(DT)^{1/n}` depends on
/// the discrete map and is reported only.
fn chain_quantities(cert: &Certificate) -> Vec<Quantity> {
    let q = |key, value, gated, absolute| Quantity {
        key,
        value,
        gated,
        absolute,
    };
    let mut out = Vec::new();
    if let Some(v) = cert.value("conclusion", "sobolev_relative_deficit") {
        out.push(q("relative_deficit", v, true, true));
    }
    let lhs = cert.value("integrated-chain", "n_int_f_q");
    let rhs = cert.value("integrated-chain", "boundary_plus_grad");
    if let (Some(l), Some(r)) = (lhs, rhs) {
        out.push(q("relative_deficit", 1.0 - l / r, true, true));
        out.push(q("n_int_f_q", l, true, false));
        out.push(q("boundary_plus_grad", r, true, false));
    }
    if let Some(v) = cert.value("integrated-chain", "n_int_f_det_1_over_n") {
        out.push(q("n_int_f_det_1_over_n", v, false, false));
    }
    out
}

fn proof(cfg: &RunConfig, paths: &[ProofKind]) -> Result<Report> {
    let (item, f) = load_field(cfg)?;
    let mut paths = paths.to_vec();
    paths.sort();
    paths.dedup();
    let seed = cfg.seed();
    let ts = cfg.tol_scale()?;
    let mut w = Writer::new(cfg.out_dir());
    w.file(&format!("field_{item}.csv"), field_csv(&f)?.as_bytes())?;
    let mut certs = Vec::new();
    for &p in &paths {
        let cert = match p {
            ProofKind::Knothe => {
                let opts = CertificateOptions {
                    corpus_item: item.clone(),
                    seed,
                    tol_scale: ts,
                };
                knothe_certificate(&f, &opts)?.0
            }
            ProofKind::Transport => {
                let opts = TransportOptions {
                    corpus_item: item.clone(),
                    seed,
                    tol_scale: ts,
                    exact: cfg.exact.unwrap_or(false),
                    ..Default::default()
                };
                let out = transport_certificate(&f, &opts)?;
                w.file(&format!("plan_{item}.csv"), plan_csv(&out.plan)?.as_bytes())?;
                out.certificate
            }
            ProofKind::Abp => {
                let opts = AbpOptions {
                    corpus_item: item.clone(),
                    seed,
                    tol_scale: ts,
                    ..Default::default()
                };
                let out = abp_certificate(&f, &opts)?;
                w.file(
                    &format!("abp_solution_{item}.csv"),
                    abp_solution_csv(&out.solution, &out.contact)?.as_bytes(),
                )?;
                out.certificate
            }
        };
        w.certificate(&format!("{item}_{}.json", p.name()), &cert)?;
        certs.push((p, cert));
    }
    #[derive(Serialize)]
    struct Row {
        path: &'static str,
        item: String,
        n: usize,
        h: f64,
        pass: bool,
        failed_stages: String,
    }
    let rows: Vec<Row> = certs
        .iter()
        .map(|(p, c)| Row {
            path: p.name(),
            item: item.clone(),
            n: c.environment.dim,
            h: c.environment.resolution,
            pass: c.pass,
            failed_stages: c.failed_stages().join(";"),
        })
        .collect();
    w.summary("proof_summary.csv", &rows)?;
    if certs.len() > 1 {
        #[derive(Serialize)]
        struct Cmp {
            path_a: &'static str,
            path_b: &'static str,
            quantity: &'static str,
            value_a: f64,
            value_b: f64,
            /// Absolute difference for `relative_deficit`, relative gap
            /// otherwise.
            gap: f64,
            tolerance: f64,
            gated: bool,
            pass: bool,
        }
        let tol = COMPARISON_TOLERANCE * ts;
        let mut cmp = Vec::new();
        for a in 0..certs.len() {
            for b in a + 1..certs.len() {
                let qb = chain_quantities(&certs[b].1);
                for qa in chain_quantities(&certs[a].1) {
                    let Some(qb) = qb.iter().find(|q| q.key == qa.key) else {
                        continue;
                    };
                    let (key, va, vb, gated) = (qa.key, qa.value, qb.value, qa.gated);
                    let gap = if qa.absolute {
                        (va - vb).abs()
                    } else {
                        (va - vb).abs() / va.abs().max(vb.abs()).max(f64::MIN_POSITIVE)
                    };
                    if gated {
                        w.report.pass &= gap <= tol;
                    }
                    cmp.push(Cmp {
                        path_a: certs[a].0.name(),
                        path_b: certs[b].0.name(),
                        quantity: key,
                        value_a: va,
                        value_b: vb,
                        gap,
                        tolerance: tol,
                        gated,
                        pass: gap <= tol,
                    });
                }
            }
        }
        w.summary("comparison.csv", &cmp)?;
    }
    w.finish("proof")
}

fn surface_from(cfg: &RunConfig, default: &str) -> Result<ParametricSurface> {
    ParametricSurface::from_name(cfg.name.as_deref().unwrap_or(default), cfg.r, cfg.h_band)
}

fn surface(cfg: &RunConfig, check: SurfaceCheck) -> Result<Report> {
    if cfg.chart.is_some() && check != SurfaceCheck::Isoperimetric {
        return Err(Error::InvalidArgument(
            "tabulated charts support integration checks (isoperimetric) only".into(),
        ));
    }
    match check {
        SurfaceCheck::MichaelSimon => surface_michael_simon(cfg),
        SurfaceCheck::Isoperimetric => surface_isoperimetric(cfg),
        SurfaceCheck::FirstVariation => surface_first_variation(cfg),
        SurfaceCheck::Curvature => surface_curvature(cfg),
    }
}

#[derive(Serialize)]
struct MichaelSimonRow {
    surface: String,
    field: String,
    gradient_curvature: f64,
    boundary: f64,
    l2_squared: f64,
    lhs: f64,
    rhs: f64,
    deficit: f64,
    pass: bool,
    alpha_chain_pass: bool,
}

fn michael_simon_pair(w: &mut Writer, s: &ParametricSurface, f: &SurfaceField) -> Result<MichaelSimonRow> {
    let cert = michael_simon_deficit(s, f)?;
    let chain = alpha_chain_check(s, f)?;
    let tag = format!("{}_{}", s.name(), f.name());
    w.certificate(&format!("michael_simon_{tag}.json"), &cert)?;
    w.certificate(&format!("alpha_chain_{tag}.json"), &chain)?;
    let v = |k: &str| cert.value("terms", k).unwrap_or(f64::NAN);
    Ok(MichaelSimonRow {
        surface: s.name(),
        field: f.name(),
        gradient_curvature: v("gradient_curvature"),
        boundary: v("boundary"),
        l2_squared: v("l2_squared"),
        lhs: v("lhs"),
        rhs: v("rhs"),
        deficit: cert.value("sobolev_deficit", "deficit").unwrap_or(f64::NAN),
        pass: cert.pass,
        alpha_chain_pass: chain.pass,
    })
}

fn surface_michael_simon(cfg: &RunConfig) -> Result<Report> {
    let surfaces = match &cfg.name {
        Some(_) => vec![surface_from(cfg, "catenoid")?],
        None => surface_corpus().into_iter().map(|(_, s)| s).collect(),
    };
    let fields = match &cfg.field {
        Some(name) => vec![SurfaceField::parse(name)?],
        None => field_corpus(),
    };
    let mut w = Writer::new(cfg.out_dir());
    let mut rows = Vec::new();
    for s in &surfaces {
        for f in &fields {
            rows.push(michael_simon_pair(&mut w, s, f)?);
        }
    }
    w.summary("surface_michael_simon.csv", &rows)?;
    w.finish("surface michael-simon")
}

fn surface_isoperimetric(cfg: &RunConfig) -> Result<Report> {
    #[derive(Serialize)]
    struct Row {
        surface: String,
        area: f64,
        boundary: f64,
        deficit: f64,
        route: &'static str,
        pass: bool,
    }
    let mut w = Writer::new(cfg.out_dir());
    if let Some(path) = &cfg.chart {
        let t = TabulatedSurface::from_path(path)?;
        let (area, boundary) = (t.surface_area(), t.boundary_length());
        w.notice("tabulated chart: minimality is not verified, the deficit is reported only");
        let row = Row {
            surface: path.display().to_string(),
            area,
            boundary,
            deficit: boundary - SOBOLEV_CONSTANT_2 * area.sqrt(),
            route: "tabulated",
            pass: true,
        };
        w.summary("surface_isoperimetric.csv", &[row])?;
        return w.finish("surface isoperimetric");
    }
    let s = surface_from(cfg, "catenoid")?;
    let row = match minimal_isoperimetric_check(&s) {
        Ok(deficit) => {
            w.report.pass &= deficit >= 0.0;
            Row {
                surface: s.name(),
                area: s.surface_area()?,
                boundary: s.boundary_length()?,
                deficit,
                route: "minimal",
                pass: deficit >= 0.0,
            }
        }
        Err(Error::NotMinimal(sup)) => {
            w.notice(format!(
                "{} is not minimal (sup |H| = {sup:e}); using the Sobolev inequality with the curvature term and f = 1",
                s.name()
            ));
            let ms = michael_simon_pair(&mut w, &s, &SurfaceField::Constant(1.0))?;
            Row {
                surface: s.name(),
                area: s.surface_area()?,
                boundary: ms.boundary,
                deficit: ms.deficit,
                route: "michael-simon",
                pass: ms.pass,
            }
        }
        Err(e) => return Err(e),
    };
    w.summary("surface_isoperimetric.csv", &[row])?;
    w.finish("surface isoperimetric")
}

fn surface_first_variation(cfg: &RunConfig) -> Result<Report> {
    let s = surface_from(cfg, "catenoid")?;
    let v = VectorField::parse(cfg.field.as_deref().unwrap_or("radial-bump"), &s)?;
    let r = first_variation_check(&s, &v)?;
    let mut w = Writer::new(cfg.out_dir());
    w.report.pass = r.pass;
    w.json(&format!("first_variation_{}_{}.json", s.name(), v.name()), &r)?;
    w.summary("surface_first_variation.csv", std::slice::from_ref(&r))?;
    w.finish("surface first-variation")
}

fn level_set_for(chart: &Chart) -> LevelSetSurface {
    match *chart {
        Chart::Sphere { radius } | Chart::Cap { radius, .. } => LevelSetSurface::sphere(radius),
        Chart::Catenoid { .. } => LevelSetSurface::catenoid(),
        Chart::Helicoid { .. } => LevelSetSurface::helicoid(),
        Chart::Disk { .. } | Chart::Annulus { .. } => LevelSetSurface::plane(),
        Chart::Graph => LevelSetSurface::graph(),
    }
}

fn surface_curvature(cfg: &RunConfig) -> Result<Report> {
    let s = surface_from(cfg, "sphere")?;
    let level = level_set_for(s.chart());
    let values: Vec<f64> = level
        .sample_points(20)
        .iter()
        .map(|p| mean_curvature_levelset(&level, p))
        .collect::<Result<_>>()?;
    let agreement = levelset_parametric_agreement(&s, &level, 50)?;
    let inv = defining_function_invariance(&level, &ScalarJet::quadratic_multiplier())?;
    #[derive(Serialize)]
    struct Row {
        surface: String,
        points: usize,
        h_min: f64,
        h_max: f64,
        parametric_agreement: f64,
        invariance_gap: f64,
        pass: bool,
    }
    let pass = agreement <= 1e-8 && inv.pass;
    let row = Row {
        surface: s.name(),
        points: values.len(),
        h_min: values.iter().copied().fold(f64::INFINITY, f64::min),
        h_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        parametric_agreement: agreement,
        invariance_gap: inv.max_difference,
        pass,
    };
    let mut w = Writer::new(cfg.out_dir());
    w.report.pass = pass;
    w.json(&format!("curvature_{}.json", s.name()), &inv)?;
    w.summary("surface_curvature.csv", &[row])?;
    w.finish("surface curvature")
}

fn density(cfg: &RunConfig) -> Result<Report> {
    let mut js = parse_j_list(cfg.j.as_deref().unwrap_or("1,10,100,1000"))?;
    js.sort_unstable();
    js.dedup();
    let families: Vec<DensityFamily> = js.par_iter().map(|&j| DensityFamily::new(j)).collect::<Result<_>>()?;
    let bound_ok = families.iter().all(|f| f.alpha <= f.pi_over_c() * (1.0 + 1e-12));
    let normalized = families.iter().all(|f| (f.normalization() - 1.0).abs() <= 1e-6);
    let monotone = families.windows(2).all(|w| w[1].c >= w[0].c);
    let c1000 = families.iter().find(|f| f.j == 1000).map(|f| f.c);
    let pi2 = std::f64::consts::PI.powi(2);
    let converged = c1000.is_none_or(|c| (c - pi2).abs() / pi2 <= 0.05);
    let summary = serde_json::json!({
        "j": js,
        "alpha_below_pi_over_c": bound_ok,
        "normalized": normalized,
        "c_increasing": monotone,
        "c_1000_relative_gap_to_pi_squared": c1000.map(|c| (c - pi2).abs() / pi2),
        "converged": converged,
        "observed_rate_pi_over_c": observed_rate(&families),
    });
    let mut w = Writer::new(cfg.out_dir());
    w.report.pass = bound_ok && normalized && monotone && converged;
    let table = density_csv(&families)?;
    w.report.stdout.extend(table.lines().map(String::from));
    w.file("density.csv", table.as_bytes())?;
    w.json("density_summary.json", &summary)?;
    w.finish("density")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> Result<Report> {
        let mut v = vec!["sobolev-lab", "--out", dir.to_str().unwrap()];
        v.extend_from_slice(args);
        run_from(v)
    }

    #[test]
    fn density_row_for_j_one() {
        let d = tempfile::tempdir().unwrap();
        let r = run_in(d.path(), &["density", "--j", "1"]).unwrap();
        assert!(r.pass);
        assert!(r.stdout[1].starts_with("1,4.18879020478639"));
        assert!(run_in(d.path(), &["density", "--j", "0"]).is_err());
    }

    #[test]
    fn unsupported_dimension_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        let e = run_in(d.path(), &["verify", "sobolev", "--n", "5"]).unwrap_err();
        assert!(matches!(e, Error::UnsupportedDimension { got: 5, .. }));
    }

    #[test]
    fn unknown_function_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        let e = run_in(d.path(), &["proof", "abp", "--f", "notafunction"]).unwrap_err();
        assert!(matches!(e, Error::Unknown { .. }));
    }

    #[test]
    fn curvature_of_sphere_radius_two() {
        let d = tempfile::tempdir().unwrap();
        let r = run_in(d.path(), &["surface", "curvature", "--name", "sphere", "--r", "2"]).unwrap();
        assert!(r.pass);
        let row: Vec<&str> = r.stdout[1].split(',').collect();
        assert!((row[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-8);
        assert!((row[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let d = tempfile::tempdir().unwrap();
        let cfg = d.path().join("run.toml");
        std::fs::write(&cfg, "j = \"1\"\n").unwrap();
        let r = run_in(d.path(), &["--config", cfg.to_str().unwrap(), "density", "--j", "10"]).unwrap();
        assert!(r.stdout[1].starts_with("10,"));
        std::fs::write(&cfg, "jj = \"1\"\n").unwrap();
        assert!(run_in(d.path(), &["--config", cfg.to_str().unwrap(), "density"]).is_err());
    }
}
