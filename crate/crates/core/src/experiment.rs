//! Seeded experiment driver: dictionary and instance specs, flat key=value
//! configuration, per-instance verification, and report writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{lebesgue_report, CheckResult, CheckSummary, LebesgueReport, LemmaContext, SigmaMode};
use crate::dictionary::{
    gen_hadamard, gen_identity_hadamard, gen_orthonormal, gen_random_spherical, in_regime, Dictionary,
};
use crate::error::{Error, Result};
use crate::linalg::{project_onto_span, Vector};
use crate::oga::{default_stop_tol, run_oga, OgaTrace};
use crate::oracle::{plant_instance, ExhaustiveOracle, PlantSpec, Provenance, ReferenceDecomposition, DEFAULT_BUDGET};
use crate::rng::{self, Stream};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum DictSource {
    HadamardUnion { k: u32 },
    Hadamard { k: u32 },
    Orthonormal { dim: usize },
    Random { dim: usize, count: usize, seed: u64, max_coherence: Option<f64> },
    File { path: PathBuf },
}

/// A dictionary source, optionally restricted to a seeded random subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictSpec {
    pub source: DictSource,
    pub subdict: Option<(usize, u64)>,
}

impl DictSpec {
    pub fn new(source: DictSource) -> Self {
        Self { source, subdict: None }
    }

    pub fn build(&self) -> Result<Dictionary> {
        let dict = match &self.source {
            DictSource::HadamardUnion { k } => gen_identity_hadamard(*k)?,
            DictSource::Hadamard { k } => gen_hadamard(*k)?,
            DictSource::Orthonormal { dim } => gen_orthonormal(*dim)?,
            DictSource::Random { dim, count, seed, max_coherence } => {
                gen_random_spherical(*dim, *count, *seed, *max_coherence)?
            }
            DictSource::File { path } => Dictionary::load(path)?,
        };
        match self.subdict {
            Some((count, seed)) => dict.random_subdictionary(count, seed),
            None => Ok(dict),
        }
    }
}

/// `family[:key=value,...]`, for example `hadamard-union:k=12,sub=512,sub_seed=1`
/// or `random:dim=64,count=16,seed=1`. Anything else is a dictionary file path.
impl FromStr for DictSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = BTreeMap::new();
        for item in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("dictionary parameter {item:?} is not key=value")))?;
            kv.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        let mut take = |key: &str| kv.remove(key);
        let need = |v: Option<String>, key: &str| v.ok_or_else(|| invalid(format!("{family}: missing {key}")));

        let source = match family {
            "hadamard-union" | "identity-hadamard" => DictSource::HadamardUnion {
                k: parse_num("k", &need(take("k"), "k")?)?,
            },
            "hadamard" => DictSource::Hadamard {
                k: parse_num("k", &need(take("k"), "k")?)?,
            },
            "orthonormal" => DictSource::Orthonormal {
                dim: parse_num("dim", &need(take("dim"), "dim")?)?,
            },
            "random" => DictSource::Random {
                dim: parse_num("dim", &need(take("dim"), "dim")?)?,
                count: parse_num("count", &need(take("count"), "count")?)?,
                seed: take("seed").map(|v| parse_num("seed", &v)).transpose()?.unwrap_or(0),
                max_coherence: take("max_coherence").map(|v| parse_num("max_coherence", &v)).transpose()?,
            },
            _ if params.is_empty() => DictSource::File { path: PathBuf::from(s) },
            _ => return Err(invalid(format!("unknown dictionary family {family:?}"))),
        };
        let sub = take("sub").map(|v| parse_num::<usize>("sub", &v)).transpose()?;
        let sub_seed = take("sub_seed").map(|v| parse_num::<u64>("sub_seed", &v)).transpose()?;
        if let Some(extra) = kv.keys().next() {
            return Err(invalid(format!("{family}: unknown parameter {extra:?}")));
        }
        Ok(Self {
            source,
            subdict: sub.map(|n| (n, sub_seed.unwrap_or(0))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// `m`-sparse plus noise orthogonal to the planted span.
    Planted,
    /// Gaussian `f` with no structure.
    Random,
    /// Even seeds planted, odd seeds random.
    Mixed,
    /// Mutually coherent atoms with cancelling signs, outshone by `2m`
    /// decoys; greedy selection tends to skip part of the best support.
    Decoy,
    /// Planted, random, and decoy by `seed mod 3`.
    Varied,
}

impl FromStr for InstanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "planted" => Ok(Self::Planted),
            "random" => Ok(Self::Random),
            "mixed" => Ok(Self::Mixed),
            "decoy" => Ok(Self::Decoy),
            "varied" => Ok(Self::Varied),
            other => Err(invalid(format!("unknown instance kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Exact,
    /// Planted reference and `sigma = ||v_0||`; no enumeration.
    Relaxed,
}

impl FromStr for OracleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Self::Exact),
            "relaxed" => Ok(Self::Relaxed),
            other => Err(invalid(format!("unknown oracle mode {other:?}"))),
        }
    }
}

/// `a..b` (half open), `a..=b`, or a comma list mixing both.
pub fn parse_list(key: &str, text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(parse_num::<u64>(key, a)?..=parse_num::<u64>(key, b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(parse_num::<u64>(key, a)?..parse_num::<u64>(key, b)?);
        } else {
            out.push(parse_num(key, part)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dict: DictSpec,
    pub m_values: Vec<usize>,
    /// OGA steps per run; `2m` when absent.
    pub steps: Option<usize>,
    pub seeds: Vec<u64>,
    pub kind: InstanceKind,
    pub oracle: OracleMode,
    pub budget: u64,
    pub coeff_low: f64,
    pub coeff_high: f64,
    pub noise: f64,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    pub report_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "dict", "m", "steps", "seeds", "kind", "oracle", "budget", "coeff_low", "coeff_high", "noise", "workers",
    "report_out", "trace_out",
];

/// Reads `key = value` lines; `#` starts a comment. Later keys win.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = k.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("unknown key {key:?}"),
            });
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

impl ExperimentConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(bad) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(invalid(format!("unknown configuration key {bad:?}")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let dict = get("dict").ok_or_else(|| invalid("no dictionary given (dict)"))?.parse()?;
        let m_values = parse_list("m", get("m").ok_or_else(|| invalid("no m given"))?)?
            .into_iter()
            .map(|m| m as usize)
            .collect();
        let seeds = parse_list("seeds", get("seeds").unwrap_or("0"))?;
        let cfg = Self {
            dict,
            m_values,
            steps: get("steps").map(|v| parse_num("steps", v)).transpose()?,
            seeds,
            kind: get("kind").unwrap_or("mixed").parse()?,
            oracle: get("oracle").unwrap_or("exact").parse()?,
            budget: get("budget").map(|v| parse_num("budget", v)).transpose()?.unwrap_or(DEFAULT_BUDGET),
            coeff_low: get("coeff_low").map(|v| parse_num("coeff_low", v)).transpose()?.unwrap_or(1.0),
            coeff_high: get("coeff_high").map(|v| parse_num("coeff_high", v)).transpose()?.unwrap_or(2.0),
            noise: get("noise").map(|v| parse_num("noise", v)).transpose()?.unwrap_or(0.5),
            workers: get("workers").map(|v| parse_num("workers", v)).transpose()?.unwrap_or(0),
            report_out: get("report_out").map(PathBuf::from),
            trace_out: get("trace_out").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seed list is empty"));
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(invalid("m must be a nonempty list of values >= 1"));
        }
        if let Some(steps) = self.steps {
            if let Some(&m) = self.m_values.iter().find(|&&m| steps < m) {
                return Err(invalid(format!("steps = {steps} is below m = {m}")));
            }
        }
        if self.oracle == OracleMode::Relaxed && !matches!(self.kind, InstanceKind::Planted | InstanceKind::Decoy) {
            return Err(invalid("relaxed oracle needs planted or decoy instances"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub seed: u64,
    pub kind: InstanceKind,
    pub dict_label: String,
    pub dim: usize,
    pub atom_count: usize,
    pub coherence: f64,
    pub m: usize,
    pub steps: usize,
    pub regime_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance: InstanceInfo,
    pub lebesgue: LebesgueReport,
    pub checks: Vec<CheckResult>,
}

impl InstanceReport {
    pub fn summary(&self) -> CheckSummary {
        CheckSummary::new(&self.checks)
    }

    pub fn is_violation(&self) -> bool {
        self.lebesgue.is_violation() || self.checks.iter().any(CheckResult::is_violation)
    }
}

/// One verified instance together with the data behind its report.
#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub report: InstanceReport,
    pub f: Vector,
    pub reference: ReferenceDecomposition,
    pub trace: OgaTrace,
}

/// Concrete kind used for `seed` under `kind`.
pub fn resolve_kind(kind: InstanceKind, seed: u64) -> InstanceKind {
    match kind {
        InstanceKind::Mixed if seed.is_multiple_of(2) => InstanceKind::Planted,
        InstanceKind::Mixed => InstanceKind::Random,
        InstanceKind::Varied => [InstanceKind::Planted, InstanceKind::Random, InstanceKind::Decoy][(seed % 3) as usize],
        k => k,
    }
}

/// Signal for `seed`, with the planted decomposition when there is one.
pub fn make_signal(
    dict: &Dictionary,
    kind: InstanceKind,
    plant: &PlantSpec,
    seed: u64,
) -> Result<(Vector, Option<ReferenceDecomposition>)> {
    match resolve_kind(kind, seed) {
        InstanceKind::Random => {
            let mut rng = rng::seeded(seed, Stream::Instance);
            Ok((rng::gaussian_vector(&mut rng, dict.dim()), None))
        }
        InstanceKind::Decoy => {
            let (f, reference) = decoy_instance(dict, plant.m, seed)?;
            Ok((f, Some(reference)))
        }
        _ => {
            let (f, reference) = plant_instance(dict, plant, seed)?;
            Ok((f, Some(reference)))
        }
    }
}

/// `f = sum_j a_j psi_j + sum_k b_k g_k` with unit `|a_j|`. The `psi_j` are
/// a random atom and its `m - 1` most coherent partners, signed so their
/// correlations with `f` partly cancel. The `2m` decoys `g_k` share one
/// weight, found by bisection, just above the point where `2m` greedy steps
/// stop selecting every `psi_j`. The
/// reference is the least-squares fit of `f` on the `psi_j`.
pub fn decoy_instance(dict: &Dictionary, m: usize, seed: u64) -> Result<(Vector, ReferenceDecomposition)> {
    let n = dict.len();
    if m == 0 || m > 12 || 3 * m > n || m >= dict.dim() {
        return Err(invalid(format!(
            "decoy instance needs 1 <= m <= 12, 3m <= {n} atoms and m < dim {}",
            dict.dim()
        )));
    }
    let mut rng = rng::seeded(seed, Stream::Instance);
    let mut support = vec![rng.random_range(0..n)];
    while support.len() < m {
        let coupling = |i: usize| support.iter().map(|&s| dict.atom_dot(s, i).abs()).sum::<f64>();
        let next = (0..n)
            .filter(|i| !support.contains(i))
            .map(|i| (coupling(i), i))
            .fold(None, |best: Option<(f64, usize)>, c| match best {
                Some(b) if b.0 >= c.0 => Some(b),
                _ => Some(c),
            })
            .expect("atoms remain")
            .1;
        support.push(next);
    }
    support.sort_unstable();
    let atoms: Vec<&Vector> = support.iter().map(|&j| dict.atom(j)).collect();

    // sign pattern with the smallest peak correlation
    let mut best: Option<(f64, Vec<f64>)> = None;
    for pattern in 0..1u32 << (m - 1) {
        let signs: Vec<f64> = (0..m).map(|j| if j > 0 && pattern >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let s = Vector::combination(dict.dim(), &atoms, &signs);
        let peak = support.iter().map(|&j| dict.correlate(j, s.as_slice()).abs()).fold(0.0, f64::max);
        if best.as_ref().is_none_or(|b| peak < b.0) {
            best = Some((peak, signs));
        }
    }
    let (peak, signs) = best.expect("at least one pattern");
    let signal = Vector::combination(dict.dim(), &atoms, &signs);
    let pool: Vec<usize> = (0..n).filter(|i| support.binary_search(i).is_err()).collect();
    let mut decoys = Vector::zeros(dict.dim());
    for k in rand::seq::index::sample(&mut rng, pool.len(), 2 * m) {
        let g = pool[k];
        // each decoy leans the same way as the planted part sees it
        let sign = if dict.correlate(g, signal.as_slice()) < 0.0 { -1.0 } else { 1.0 };
        decoys.axpy(sign, dict.atom(g));
    }
    let with_weight = |w: f64| {
        let mut f = signal.clone();
        f.axpy(w, &decoys);
        f
    };
    let skips_support = |w: f64| -> Result<bool> {
        let f = with_weight(w);
        let t = run_oga(dict, &f, 2 * m, default_stop_tol(&f))?;
        Ok(support.iter().any(|j| !t.selected.contains(j)))
    };
    // smallest weight at which 2m greedy steps leave out a planted atom
    let (mut lo, mut hi) = (0.0, 2.0 * peak.max(1.0));
    if skips_support(hi)? {
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if skips_support(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let f = with_weight(hi * rng.random_range(1.0005..1.003));

    let fit = project_onto_span(&atoms, &f)?;
    let v0_norm = fit.residual.norm();
    Ok((
        f,
        ReferenceDecomposition {
            support,
            coeffs: fit.coeffs,
            v0: fit.residual,
            v0_norm,
            provenance: Provenance::Planted,
        },
    ))
}

/// Everything a batch of seeds at one `m` shares.
pub struct Experiment<'a> {
    dict: &'a Dictionary,
    oracle: ExhaustiveOracle<'a>,
    mode: OracleMode,
    kind: InstanceKind,
    plant: PlantSpec,
    m: usize,
    steps: usize,
}

impl<'a> Experiment<'a> {
    pub fn new(dict: &'a Dictionary, cfg: &ExperimentConfig, m: usize) -> Result<Self> {
        let oracle = ExhaustiveOracle::with_budget(dict, cfg.budget);
        if cfg.oracle == OracleMode::Exact {
            oracle.check_budget(m)?;
        }
        Ok(Self {
            dict,
            oracle,
            mode: cfg.oracle,
            kind: cfg.kind,
            plant: PlantSpec {
                m,
                coeff_low: cfg.coeff_low,
                coeff_high: cfg.coeff_high,
                noise_norm: cfg.noise,
            },
            m,
            steps: cfg.steps.unwrap_or(2 * m),
        })
    }

    pub fn run(&self, seed: u64) -> Result<InstanceOutcome> {
        let dict = self.dict;
        let m = self.m;
        let coherence = dict.coherence().m_coherence;
        let (f, planted) = make_signal(dict, self.kind, &self.plant, seed)?;
        let (reference, sigma, sigma_mode) = match self.mode {
            OracleMode::Exact => {
                let best = self.oracle.best_m_term(&f, m)?;
                let sigma = best.sigma;
                (ReferenceDecomposition::from(best), sigma, SigmaMode::Exact)
            }
            OracleMode::Relaxed => {
                let r = planted.ok_or_else(|| invalid("relaxed oracle needs a planted instance"))?;
                let sigma = r.v0_norm;
                (r, sigma, SigmaMode::Relaxed)
            }
        };
        let trace = run_oga(dict, &f, self.steps, default_stop_tol(&f))?;
        let ctx = LemmaContext::new(dict, &trace, &reference, m, coherence)?;
        let mut checks = ctx.lemma_suite()?;
        checks.extend(ctx.final_state());
        let report = InstanceReport {
            instance: InstanceInfo {
                seed,
                kind: resolve_kind(self.kind, seed),
                dict_label: dict.label().to_string(),
                dim: dict.dim(),
                atom_count: dict.len(),
                coherence,
                m,
                steps: trace.steps(),
                regime_ok: in_regime(m, coherence),
            },
            lebesgue: lebesgue_report(&trace, sigma, sigma_mode, m, coherence),
            checks,
        };
        Ok(InstanceOutcome {
            report,
            f,
            reference,
            trace,
        })
    }
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

/// Runs every `(m, seed)` pair of the configuration. Outcomes are ordered by
/// `m`, then by seed, whatever the worker count.
pub fn run_experiment(dict: &Dictionary, cfg: &ExperimentConfig) -> Result<Vec<InstanceOutcome>> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut m_values = cfg.m_values.clone();
    m_values.sort_unstable();
    m_values.dedup();

    let mut all = Vec::new();
    for m in m_values {
        let exp = Experiment::new(dict, cfg, m)?;
        let batch = in_pool(cfg.workers, || {
            seeds
                .par_iter()
                .map(|&s| exp.run(s).map_err(|e| invalid(format!("m = {m}, seed {s}: {e}"))))
                .collect::<Result<Vec<_>>>()
        })??;
        all.extend(batch);
    }
    Ok(all)
}

pub fn exit_code(reports: &[InstanceReport]) -> i32 {
    i32::from(reports.iter().any(InstanceReport::is_violation))
}

pub fn write_reports_json<W: Write>(reports: &[InstanceReport], out: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, reports).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

pub const SUMMARY_HEADER: &str = "seed,kind,m,regime_ok,steps,sigma,sigma_mode,final_residual,ratio,lebesgue_passed,checked,vacuous,violations,reported_failures,worst_utilization";

pub fn write_summary_csv<W: Write>(reports: &[InstanceReport], out: &mut W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in reports {
        let s = r.summary();
        let l = &r.lebesgue;
        let mut line = String::new();
        write!(
            line,
            "{},{},{},{},{},{:e},{},{:e},",
            r.instance.seed,
            kind_name(r.instance.kind),
            r.instance.m,
            r.instance.regime_ok,
            r.instance.steps,
            l.sigma,
            if l.sigma_mode == SigmaMode::Exact { "exact" } else { "relaxed" },
            l.final_residual
        )
        .expect("string write");
        if let Some(ratio) = l.ratio {
            write!(line, "{ratio:e}").expect("string write");
        }
        write!(
            line,
            ",{},{},{},{},{},{:e}",
            l.passed, s.checked, s.vacuous, s.violations, s.reported_failures, s.worst_utilization
        )
        .expect("string write");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn kind_name(kind: InstanceKind) -> &'static str {
    match kind {
        InstanceKind::Planted => "planted",
        InstanceKind::Random => "random",
        InstanceKind::Mixed => "mixed",
        InstanceKind::Decoy => "decoy",
        InstanceKind::Varied => "varied",
    }
}

/// `report.json` pairs with `report.csv`.
pub fn summary_path(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

/// Step and coefficient CSV paths for one run. With several runs the tag
/// (`_m2_seed7`, say) goes before the extension.
pub fn trace_paths(base: &Path, tag: Option<&str>) -> (PathBuf, PathBuf) {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    let stem = match tag {
        Some(t) => format!("{stem}_{t}"),
        None => stem.to_string(),
    };
    (base.with_file_name(format!("{stem}.{ext}")), base.with_file_name(format!("{stem}_x.{ext}")))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes the JSON report, its CSV summary, and trace files as configured.
pub fn write_outputs(cfg: &ExperimentConfig, outcomes: &[InstanceOutcome]) -> Result<()> {
    let reports: Vec<InstanceReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    if let Some(path) = &cfg.report_out {
        let mut out = create(path)?;
        write_reports_json(&reports, &mut out)?;
        out.flush()?;
        let mut out = create(&summary_path(path))?;
        write_summary_csv(&reports, &mut out)?;
        out.flush()?;
    }
    if let Some(base) = &cfg.trace_out {
        let several_m = outcomes.iter().any(|o| o.report.instance.m != outcomes[0].report.instance.m);
        for o in outcomes {
            let tag = match (several_m, outcomes.len() > 1) {
                (true, _) => Some(format!("m{}_seed{}", o.report.instance.m, o.report.instance.seed)),
                (false, true) => Some(format!("seed{}", o.report.instance.seed)),
                _ => None,
            };
            let (steps_path, x_path) = trace_paths(base, tag.as_deref());
            let mut out = create(&steps_path)?;
            o.trace.write_steps_csv(&mut out)?;
            out.flush()?;
            let mut out = create(&x_path)?;
            o.trace.write_x_csv(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn dict_spec_parsing() {
        let s: DictSpec = "hadamard-union:k=12,sub=512,sub_seed=3".parse().unwrap();
        assert_eq!(s.source, DictSource::HadamardUnion { k: 12 });
        assert_eq!(s.subdict, Some((512, 3)));
        let s: DictSpec = "random:dim=64,count=16,seed=1".parse().unwrap();
        assert_eq!(
            s.source,
            DictSource::Random {
                dim: 64,
                count: 16,
                seed: 1,
                max_coherence: None
            }
        );
        let s: DictSpec = "dicts/d.csv".parse().unwrap();
        assert_eq!(s.source, DictSource::File { path: "dicts/d.csv".into() });
        assert!("orthonormal".parse::<DictSpec>().is_err());
        assert!("orthonormal:k=3".parse::<DictSpec>().is_err());
        assert!("hadamard:k=3,bogus=1".parse::<DictSpec>().is_err());
        assert!("warp:k=3".parse::<DictSpec>().is_err());
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("seeds", "0..3,7,10..=11").unwrap(), vec![0, 1, 2, 7, 10, 11]);
        assert!(parse_list("seeds", "x").is_err());
    }

    #[test]
    fn config_validation() {
        let ok = map(&[("dict", "orthonormal:dim=8"), ("m", "2"), ("seeds", "0..4")]);
        let cfg = ExperimentConfig::from_map(&ok).unwrap();
        assert_eq!(cfg.seeds.len(), 4);
        assert_eq!(cfg.kind, InstanceKind::Mixed);

        let mut bad = ok.clone();
        bad.insert("steps".into(), "1".into());
        assert!(ExperimentConfig::from_map(&bad).is_err());
        let mut bad = ok.clone();
        bad.insert("m".into(), "0".into());
        assert!(ExperimentConfig::from_map(&bad).is_err());
        let mut bad = ok.clone();
        bad.insert("seeds".into(), "".into());
        assert!(ExperimentConfig::from_map(&bad).is_err());
        let mut bad = ok.clone();
        bad.insert("oracle".into(), "relaxed".into());
        assert!(ExperimentConfig::from_map(&bad).is_err());
        let mut bad = ok;
        bad.insert("colour".into(), "red".into());
        assert!(ExperimentConfig::from_map(&bad).is_err());
    }

    #[test]
    fn config_file_reading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        fs::write(&path, "# sweep\ndict = orthonormal:dim=8\nm=1\n\nseeds = 1,2 # two\n").unwrap();
        let map = read_config_file(&path).unwrap();
        assert_eq!(map["seeds"], "1,2");
        fs::write(&path, "dict = orthonormal:dim=8\nnonsense\n").unwrap();
        assert!(matches!(read_config_file(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn orthonormal_runs_have_ratio_at_most_one() {
        let cfg = ExperimentConfig::from_map(&map(&[
            ("dict", "orthonormal:dim=16"),
            ("m", "3"),
            ("seeds", "0..6"),
        ]))
        .unwrap();
        let dict = cfg.dict.build().unwrap();
        let out = run_experiment(&dict, &cfg).unwrap();
        assert_eq!(out.len(), 6);
        for o in &out {
            assert!(o.report.lebesgue.ratio.is_none_or(|r| r <= 1.0 + 1e-12));
            assert!(!o.report.is_violation());
        }
    }

    #[test]
    fn out_of_regime_is_not_a_violation() {
        let cfg = ExperimentConfig::from_map(&map(&[
            ("dict", "hadamard-union:k=4"),
            ("m", "2"),
            ("seeds", "0..4"),
        ]))
        .unwrap();
        let dict = cfg.dict.build().unwrap();
        let out = run_experiment(&dict, &cfg).unwrap();
        let reports: Vec<_> = out.into_iter().map(|o| o.report).collect();
        assert!(reports.iter().all(|r| !r.instance.regime_ok));
        assert_eq!(exit_code(&reports), 0);
    }

    #[test]
    fn budget_checked_up_front() {
        let cfg = ExperimentConfig::from_map(&map(&[
            ("dict", "hadamard-union:k=5"),
            ("m", "3"),
            ("budget", "100"),
        ]))
        .unwrap();
        let dict = cfg.dict.build().unwrap();
        assert!(matches!(run_experiment(&dict, &cfg), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn trace_path_tags() {
        let (a, b) = trace_paths(Path::new("out/tr.csv"), Some("seed3"));
        assert_eq!(a, Path::new("out/tr_seed3.csv"));
        assert_eq!(b, Path::new("out/tr_seed3_x.csv"));
        let (a, b) = trace_paths(Path::new("tr.csv"), None);
        assert_eq!((a.as_path(), b.as_path()), (Path::new("tr.csv"), Path::new("tr_x.csv")));
    }
}
