use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use welldist::construction::{psi_schedule, run_construction, Construction, ConstructionParams};
use welldist::dispersion::{
    anchored_dispersion, covering_radius_torus, kronecker_covering_radius_1d, kronecker_dispersion_1d,
    witness_search, CoveringOptions, DispersionRecord, WitnessCertificate, WitnessSource,
};
use welldist::irrationality::{
    best_approx_records, dirichlet_check, singularity_profile, DirichletReport, IrrationalityProfile, Records,
    SingularityProfile,
};
use welldist::sequence::{kronecker_prefix, read_sequence_file, AlphaVector, PointSource, SequencePrefix};
use welldist::verifier::{
    bounded_record_check_series, exponential_checkpoints, level_hit_statistics_series, record_tracker, records_csv,
    sample_etas, BoundedRecordReport, HitStatistics, RecordSeries,
};

use crate::config::{parse_qs, Format, RunConfig};
use crate::{ConstructArgs, Failure, OutputArgs, SourceArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

enum Source {
    Alpha(AlphaVector),
    Points(SequencePrefix),
}

impl Source {
    fn point_source(&self) -> &dyn PointSource {
        match self {
            Source::Alpha(a) => a,
            Source::Points(p) => p,
        }
    }

    fn witness_source(&self) -> WitnessSource<'_> {
        match self {
            Source::Alpha(a) => WitnessSource::Kronecker(a),
            Source::Points(p) => WitnessSource::Prefix(p),
        }
    }

    fn dim(&self) -> usize {
        self.point_source().dim()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load(args: &SourceArgs) -> Result<Source, Failure> {
    let source = match (&args.alpha, &args.input) {
        (Some(a), None) => Source::Alpha(AlphaVector::parse(a)?),
        (None, Some(path)) => Source::Points(read_sequence_file(path)?),
        _ => return Err(usage("exactly one of --alpha and --input is required")),
    };
    match args.n {
        Some(n) if n != source.dim() => Err(usage(format!("--n {n} but the source has dimension {}", source.dim()))),
        _ => Ok(source),
    }
}

fn base_config(subcommand: &str, source: &SourceArgs, dim: usize, output: &OutputArgs) -> RunConfig {
    let format = output.format.unwrap_or(match &output.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
        _ => Format::Json,
    });
    RunConfig {
        subcommand: subcommand.into(),
        alpha: source.alpha.clone(),
        input: source.input.clone(),
        n: dim,
        out: output.out.clone(),
        format,
        ..RunConfig::default()
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    artifact: String,
    version: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

fn emit<T: Serialize>(cfg: &RunConfig, result: &T, csv: impl FnOnce() -> String) -> Result<(), Failure> {
    let artifact = format!("welldist-{}", cfg.subcommand);
    let text = match cfg.format {
        Format::Json => {
            let env = Envelope { artifact, version: VERSION, config: cfg, result };
            let mut s = serde_json::to_string_pretty(&env).map_err(|e| Failure::Check(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "# artifact={artifact} version={VERSION}");
            let _ = writeln!(s, "# config={}", serde_json::to_string(cfg).unwrap());
            s.push_str(&csv());
            s
        }
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| usage(format!("stdout: {e}"))),
    }
}

fn covering(resolution: f64) -> Result<CoveringOptions, Failure> {
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(usage(format!("--resolution must lie in (0, 0.1], got {resolution}")));
    }
    Ok(CoveringOptions { resolution })
}

fn warn_if_rational(alpha: &AlphaVector, t: u64) -> Result<(), Failure> {
    let profile = best_approx_records(alpha, t)?;
    if profile.hits_zero() {
        let q = profile.records.last().unwrap().q;
        eprintln!("welldist: warning: alpha is rational (q alpha is integral at q = {q}); records plateau");
    }
    Ok(())
}

// psi -------------------------------------------------------------------

#[derive(Serialize)]
struct PsiResult {
    profile: IrrationalityProfile,
    dirichlet: DirichletReport,
    singularity: SingularityProfile,
}

pub fn psi(source: &SourceArgs, t: u64, theta: f64, output: &OutputArgs) -> Result<(), Failure> {
    if t == 0 {
        return Err(usage("--t must be positive"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(usage("--theta must be positive"));
    }
    let Source::Alpha(alpha) = load(source)? else {
        return Err(usage("psi needs --alpha"));
    };
    let mut cfg = base_config("psi", source, alpha.dim(), output);
    cfg.t = Some(t);
    cfg.theta = Some(theta);

    let profile = best_approx_records(&alpha, t)?;
    let dirichlet = dirichlet_check(&profile);
    let singularity = singularity_profile(&alpha, t, theta)?;
    if profile.hits_zero() {
        eprintln!("welldist: warning: alpha is rational; psi reaches 0");
    }
    let result = PsiResult { profile, dirichlet, singularity };
    emit(&cfg, &result, || result.profile.to_csv())?;
    if !result.dirichlet.passed {
        return Err(Failure::Check(format!(
            "Dirichlet bound violated at t = {}",
            result.dirichlet.first_violation.unwrap_or(0)
        )));
    }
    Ok(())
}

// disp ------------------------------------------------------------------

pub fn disp(source: &SourceArgs, qs: Option<&str>, resolution: f64, output: &OutputArgs) -> Result<(), Failure> {
    let opts = covering(resolution)?;
    let src = load(source)?;
    let list = match (qs, &src) {
        (Some(spec), _) => parse_qs(spec).map_err(usage)?,
        (None, Source::Points(p)) => vec![p.len() as u64],
        (None, Source::Alpha(_)) => return Err(usage("--qs is required with --alpha")),
    };
    let mut cfg = base_config("disp", source, src.dim(), output);
    cfg.qs = qs.map(str::to_string);
    cfg.resolution = Some(resolution);

    let mut rows = Vec::with_capacity(list.len());
    for &q in &list {
        let row = match &src {
            Source::Alpha(a) if a.dim() == 1 => {
                let x = a.values()[0];
                DispersionRecord::new(&kronecker_dispersion_1d(x, q)?, &kronecker_covering_radius_1d(x, q)?)
            }
            _ => {
                let prefix = match &src {
                    Source::Alpha(a) => kronecker_prefix(a, q)?,
                    Source::Points(p) => p.truncated(q as usize)?,
                };
                DispersionRecord::new(&anchored_dispersion(&prefix)?, &covering_radius_torus(&prefix, &opts)?)
            }
        };
        rows.push(row);
    }
    emit(&cfg, &rows, || {
        let mut s = String::from("q,s_star,C_of_q,rho_lower,rho_upper\n");
        for r in &rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.q, r.s_star, r.c_of_q, r.rho_lower, r.rho_upper);
        }
        s
    })
}

// witness ---------------------------------------------------------------

#[derive(Serialize)]
struct WitnessResult {
    candidates: usize,
    certified: usize,
    certificates: Vec<WitnessCertificate>,
}

pub fn witness(source: &SourceArgs, qs: &str, c: f64, resolution: f64, output: &OutputArgs) -> Result<(), Failure> {
    let opts = covering(resolution)?;
    let list = parse_qs(qs).map_err(usage)?;
    let src = load(source)?;
    let mut cfg = base_config("witness", source, src.dim(), output);
    cfg.qs = Some(qs.to_string());
    cfg.c = Some(c);
    cfg.resolution = Some(resolution);

    let certificates = witness_search(src.witness_source(), &list, c, &opts)?;
    let result = WitnessResult { candidates: list.len(), certified: certificates.len(), certificates };
    emit(&cfg, &result, || {
        let mut s = String::from("q,C_of_q,s_star,rho_lower,rho_upper\n");
        for w in &result.certificates {
            let _ = writeln!(s, "{},{},{},{},{}", w.q, w.c_of_q, w.s_star, w.rho_lower, w.rho_upper);
        }
        s
    })
}

// construct -------------------------------------------------------------

fn construct_config(source: &SourceArgs, dim: usize, p: &ConstructArgs, output: &OutputArgs) -> RunConfig {
    let mut cfg = base_config("construct", source, dim, output);
    cfg.c = Some(p.c);
    cfg.epsilon = Some(p.eps);
    cfg.schedule = Some(p.schedule.clone());
    cfg.levels = Some(p.levels);
    cfg.max_q = Some(p.max_q);
    cfg.qs = p.qs.clone();
    cfg.resolution = Some(p.resolution);
    cfg
}

fn build(src: &Source, p: &ConstructArgs) -> Result<Construction, Failure> {
    if p.levels == 0 {
        return Err(usage("--levels must be positive"));
    }
    let opts = covering(p.resolution)?;
    let params = ConstructionParams {
        c: p.c,
        epsilon: p.eps,
        schedule: psi_schedule(&p.schedule, src.dim(), p.levels)?,
        levels: p.levels,
        max_q: p.max_q,
    };
    let max_q = p.max_q;
    let candidates: Box<dyn Iterator<Item = u64> + '_> = match (&p.qs, src) {
        (Some(spec), _) => Box::new(parse_qs(spec).map_err(usage)?.into_iter()),
        (None, Source::Alpha(a)) => Box::new(Records::new(a, Some(max_q)).map(|(q, _)| q)),
        (None, Source::Points(pts)) => Box::new(1..=(pts.len() as u64).min(max_q)),
    };
    Ok(run_construction(src.point_source(), src.witness_source(), candidates, &params, opts)?)
}

pub fn construct(source: &SourceArgs, p: &ConstructArgs, output: &OutputArgs) -> Result<(), Failure> {
    let src = load(source)?;
    let cfg = construct_config(source, src.dim(), p, output);
    let run = build(&src, p)?;
    emit(&cfg, &run.report, || run.report.schmidt_csv())?;
    if !run.report.all_checks_passed {
        return Err(Failure::Check("a construction check failed; see the report".into()));
    }
    Ok(())
}

// liminf ----------------------------------------------------------------

#[derive(Serialize)]
struct LiminfResult {
    samples: usize,
    checkpoints: Vec<u64>,
    non_increasing: bool,
    series: Vec<RecordSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level_q: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounded: Option<Vec<BoundedRecordReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hits: Option<HitStatistics>,
}

/// Rebuilds the construction a `construct` report came from and checks that
/// it reproduces the same levels.
fn replay(path: &Path, source: &SourceArgs) -> Result<(SourceArgs, Construction), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_value(doc["config"].clone())
        .map_err(|e| usage(format!("{}: no run configuration: {e}", path.display())))?;
    if cfg.subcommand != "construct" {
        return Err(usage(format!("{} is not a construct report", path.display())));
    }
    let stored = SourceArgs { alpha: cfg.alpha.clone(), input: cfg.input.clone(), n: Some(cfg.n) };
    if (source.alpha.is_some() || source.input.is_some())
        && (source.alpha != stored.alpha || source.input != stored.input)
    {
        return Err(usage("the source differs from the one recorded in --state"));
    }
    let p = ConstructArgs {
        c: cfg.c.ok_or_else(|| usage("state lacks C"))?,
        eps: cfg.epsilon.ok_or_else(|| usage("state lacks epsilon"))?,
        schedule: cfg.schedule.clone().ok_or_else(|| usage("state lacks schedule"))?,
        levels: cfg.levels.ok_or_else(|| usage("state lacks levels"))?,
        max_q: cfg.max_q.ok_or_else(|| usage("state lacks max_q"))?,
        qs: cfg.qs.clone(),
        resolution: cfg.resolution.unwrap_or(0.01),
    };
    let src = load(&stored)?;
    let run = build(&src, &p)?;
    let recorded: Vec<u64> = doc["result"]["levels"]
        .as_array()
        .map(|ls| ls.iter().filter_map(|l| l["q_nu"].as_u64()).collect())
        .unwrap_or_default();
    let replayed: Vec<u64> = run.report.levels.iter().map(|l| l.q_nu).collect();
    if recorded != replayed {
        return Err(Failure::Check(format!(
            "state replay gives levels {replayed:?}, the report records {recorded:?}"
        )));
    }
    Ok((stored, run))
}

pub fn liminf(
    source: &SourceArgs,
    etas: usize,
    seed: u64,
    k: u64,
    state: Option<&Path>,
    output: &OutputArgs,
) -> Result<(), Failure> {
    if etas == 0 {
        return Err(usage("--etas must be positive"));
    }
    if k == 0 {
        return Err(usage("--k must be positive"));
    }
    let (source, run) = match state {
        Some(path) => {
            let (s, run) = replay(path, source)?;
            (SourceArgs { n: source.n, ..s }, Some(run))
        }
        None => (source.clone(), None),
    };
    let src = load(&source)?;
    let dim = src.dim();
    let mut cfg = base_config("liminf", &source, dim, output);
    cfg.k = Some(k);
    cfg.etas = Some(etas);
    cfg.seed = seed;
    cfg.state = state.map(Path::to_path_buf);

    if let Source::Alpha(a) = &src {
        warn_if_rational(a, k)?;
    }
    let level_q: Option<Vec<u64>> = run.as_ref().map(|r| r.state.levels.iter().map(|l| l.q()).collect());
    let mut checkpoints = exponential_checkpoints(k);
    checkpoints.extend(level_q.iter().flatten());
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let targets = sample_etas(etas, dim, seed);
    let series = record_tracker(src.point_source(), &targets, &checkpoints)?;
    let non_increasing = series.iter().all(|s| s.is_non_increasing(dim));
    let (bounded, hits) = match &run {
        Some(run) => {
            let bounded = run
                .witnesses
                .iter()
                .map(|w| bounded_record_check_series(w, &series, dim))
                .collect::<Result<Vec<_>, _>>()?;
            (Some(bounded), Some(level_hit_statistics_series(&run.state, &targets, &series)?))
        }
        None => (None, None),
    };
    let result = LiminfResult {
        samples: etas,
        checkpoints,
        non_increasing,
        series,
        level_q,
        bounded,
        hits,
    };
    emit(&cfg, &result, || records_csv(&result.series))?;

    if !result.non_increasing {
        return Err(Failure::Check("a record curve increased".into()));
    }
    if let Some(b) = result.bounded.iter().flatten().find(|b| !b.passed) {
        return Err(Failure::Check(format!("record bound violated at q = {}", b.q)));
    }
    if result.hits.as_ref().is_some_and(|h| !h.all_decay_certified) {
        return Err(Failure::Check("a target in some E_nu misses its record bound".into()));
    }
    Ok(())
}
