mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use specequiv::catalog::{family_pairs, process, theorem_pair};
use specequiv::equiv::{check_pair, check_theorem, run_suite, EquivVerdict, Mode, SuiteConfig};
use specequiv::gof::{gof_test, parse_margins, PValueMethod, Sample, SpectrumSource};
use specequiv::mc::{mean_and_se, sample_sqnorm, McConfig};
use specequiv::opexpr::{format, parse, OperatorExpr};
use specequiv::spectral::{nystrom_spectrum, pinned_sheet_spectrum, Spectrum};
use specequiv::Error;

use output::{Format, Report};

#[derive(Parser, Debug)]
#[command(
    name = "specequiv",
    version,
    about = "Spectra of Gaussian covariance operators, spectral-equivalence checks and omega-square goodness of fit"
)]
struct Cli {
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format [default: csv for simulate, tsv for table, json otherwise].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed for Monte-Carlo work.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Leading eigenvalues of a covariance operator.
    Spectrum(SpectrumArgs),
    /// Check whether two covariances are spectrally equivalent.
    Equiv(EquivArgs),
    /// Omega-square goodness-of-fit test of a sample against product margins.
    Gof(GofArgs),
    /// Monte-Carlo draws of the squared L2 norm.
    Simulate(SimulateArgs),
    /// Leading reciprocal eigenvalues of the pinned Brownian sheet, d = 2 and 3.
    Table(TableArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Operand {
    /// Operator expression, e.g. "T(I-P)T'".
    #[arg(long)]
    expr: Option<String>,
    /// Catalog process name, e.g. pinned-sheet or int-left(bridge).
    #[arg(long)]
    name: Option<String>,
}

impl Operand {
    fn resolve(&self, d: usize) -> Result<(String, OperatorExpr), Error> {
        match (&self.expr, &self.name) {
            (Some(e), _) => Ok((e.clone(), parse(e)?)),
            (None, Some(n)) => {
                let p = process(n, d)?;
                Ok((p.name, p.covariance))
            }
            (None, None) => unreachable!("clap requires one operand"),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SpectrumMethod {
    Nystrom,
    Secular,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    operand: Operand,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Grid points per axis.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Number of eigenvalues reported.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, value_enum, default_value_t = SpectrumMethod::Nystrom)]
    method: SpectrumMethod,
    /// Modes per axis for the secular method [default: depends on --dim].
    #[arg(long)]
    modes: Option<usize>,
    /// Richardson-extrapolate with the grid of half the resolution.
    #[arg(long)]
    extrapolate: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ModeArg {
    Exact,
    Continuum,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::MatrixExact,
            ModeArg::Continuum => Mode::Continuum,
        }
    }
}

#[derive(Args, Debug)]
struct EquivArgs {
    /// Left covariance: an expression or a catalog name.
    #[arg(long, requires = "rhs", conflicts_with_all = ["theorem", "suite"])]
    lhs: Option<String>,
    /// Right covariance: an expression or a catalog name.
    #[arg(long, requires = "lhs")]
    rhs: Option<String>,
    /// Catalog pair, e.g. thm3, rel-a or rel-a[0.5].
    #[arg(long, conflicts_with = "suite")]
    theorem: Option<String>,
    /// Run every catalog pair plus the negative controls.
    #[arg(long)]
    suite: bool,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Dimensions of the suite, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
    dims: Vec<usize>,
    /// Grid points per axis [default: 256, 40, 16 for d = 1, 2, 3].
    #[arg(long)]
    grid: Option<usize>,
    /// Number of leading eigenvalues compared.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SourceArg {
    Secular,
    Nystrom,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum PMethodArg {
    Imhof,
    Montecarlo,
}

#[derive(Args, Debug)]
struct GofArgs {
    /// CSV file, one observation per row, optional header. The first --dim columns are used.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dim: usize,
    /// Comma-separated margins: uniform[:a:b], exp[:rate], norm[:mu:sigma], pwl:x0:F0:x1:F1...
    /// [default: uniform in every coordinate].
    #[arg(long)]
    margins: Option<String>,
    #[arg(long, value_enum, default_value_t = SourceArg::Secular)]
    source: SourceArg,
    /// Modes per axis for the secular spectrum [default: depends on --dim].
    #[arg(long)]
    modes: Option<usize>,
    /// Grid points per axis for the Nystrom spectrum.
    #[arg(long, default_value_t = 40)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = PMethodArg::Imhof)]
    method: PMethodArg,
    /// Monte-Carlo replicates for --method montecarlo.
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    /// Exit with status 1 when the p-value falls below this level.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    operand: Operand,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Karhunen-Loeve modes per draw.
    #[arg(long, default_value_t = 100)]
    modes: usize,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Eigenvalues per dimension.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

const SCHEMA_SPECTRUM: &str = "specequiv.spectrum/1";
const SCHEMA_EQUIV: &str = "specequiv.equiv/1";
const SCHEMA_GOF: &str = "specequiv.gof/1";
const SCHEMA_SIMULATE: &str = "specequiv.simulate/1";
const SCHEMA_TABLE: &str = "specequiv.table/1";

fn default_grid(d: usize) -> usize {
    match d {
        1 => 256,
        2 => 40,
        _ => 16,
    }
}

fn default_modes(d: usize) -> usize {
    match SpectrumSource::default_for(d) {
        SpectrumSource::Secular { modes } => modes,
        SpectrumSource::Nystrom { .. } => unreachable!(),
    }
}

#[derive(Serialize)]
struct SpectrumReport<'a> {
    schema: &'static str,
    operator: String,
    expression: String,
    d: usize,
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modes: Option<usize>,
    reciprocals: Vec<f64>,
    #[serde(flatten)]
    spectrum: &'a Spectrum,
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<(Report, u8), Error> {
    let (label, expr) = a.operand.resolve(a.dim)?;
    let (spectrum, method, grid, modes) = match a.method {
        SpectrumMethod::Nystrom => (
            nystrom_spectrum(&expr, a.dim, a.grid, a.top, a.extrapolate)?,
            "nystrom",
            Some(a.grid),
            None,
        ),
        SpectrumMethod::Secular => {
            let pinned = process("pinned-sheet", a.dim)?.covariance;
            if expr != pinned {
                return Err(Error::Argument(format!(
                    "the secular method applies to the pinned sheet only, not `{label}`"
                )));
            }
            let j = a.modes.unwrap_or_else(|| default_modes(a.dim));
            (pinned_sheet_spectrum(a.dim, j, a.top)?, "secular", None, Some(j))
        }
    };
    let report = SpectrumReport {
        schema: SCHEMA_SPECTRUM,
        operator: label,
        expression: format(&expr),
        d: a.dim,
        method,
        grid,
        modes,
        reciprocals: spectrum.reciprocals(),
        spectrum: &spectrum,
    };
    let rows = spectrum
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), v.to_string(), (1.0 / v).to_string()])
        .collect();
    Ok((
        Report::new(serde_json::to_value(&report).expect("serializable"), vec!["index", "eigenvalue", "reciprocal"], rows),
        0,
    ))
}

fn resolve_side(text: &str, d: usize) -> Result<OperatorExpr, Error> {
    match parse(text) {
        Ok(e) => Ok(e),
        Err(parse_err) => process(text, d).map(|p| p.covariance).map_err(|e| match e {
            Error::UnknownName(_) | Error::Parse { .. } => parse_err,
            other => other,
        }),
    }
}

fn theorem_pairs_for(id: &str, d: usize) -> Result<Vec<specequiv::TheoremPair>, Error> {
    match id.split_once('[') {
        Some((family, rest)) => {
            let arg = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                pos: id.len(),
                msg: "expected `]`".into(),
            })?;
            Ok(vec![theorem_pair(family, Some(arg), d)?])
        }
        None => family_pairs(id, d),
    }
}

fn verdict_rows(verdicts: &[EquivVerdict]) -> Vec<Vec<String>> {
    verdicts
        .iter()
        .map(|v| {
            vec![
                v.id.clone(),
                v.d.to_string(),
                serde_json::to_value(v.mode).expect("serializable").as_str().unwrap_or("").to_string(),
                v.k.to_string(),
                format!("{:e}", v.max_rel_dev),
                v.pass.to_string(),
                v.expected.map(|e| e.to_string()).unwrap_or_default(),
                v.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

fn cmd_equiv(a: &EquivArgs) -> Result<(Report, u8), Error> {
    let mode: Mode = a.mode.into();
    let verdicts: Vec<EquivVerdict> = if a.suite {
        let n_per_dim: BTreeMap<usize, usize> =
            a.dims.iter().map(|&d| (d, a.grid.unwrap_or_else(|| default_grid(d)))).collect();
        let cfg = SuiteConfig {
            dims: a.dims.clone(),
            n_per_dim,
            k: a.k,
            mode,
            include_controls: true,
        };
        run_suite(&cfg)?
    } else if let Some(id) = &a.theorem {
        let n = a.grid.unwrap_or_else(|| default_grid(a.dim));
        theorem_pairs_for(id, a.dim)?
            .iter()
            .map(|p| check_theorem(p, n, a.k, mode))
            .collect()
    } else if let (Some(l), Some(r)) = (&a.lhs, &a.rhs) {
        let n = a.grid.unwrap_or_else(|| default_grid(a.dim));
        let (lhs, rhs) = (resolve_side(l, a.dim)?, resolve_side(r, a.dim)?);
        let mut v = check_pair(&lhs, &rhs, a.dim, n, a.k, mode)?;
        v.id = "custom".into();
        vec![v]
    } else {
        return Err(Error::Argument("give --lhs and --rhs, --theorem or --suite".into()));
    };
    if let Some(v) = verdicts.iter().find(|v| v.error.is_some()) {
        if !a.suite {
            return Err(Error::Argument(format!(
                "{}: {}",
                v.id,
                v.error.as_deref().unwrap_or_default()
            )));
        }
    }
    let ok = verdicts.iter().all(|v| v.as_expected() && (v.expected.is_some() || v.pass));
    let code = if verdicts.iter().any(|v| v.error.is_some()) {
        2
    } else if ok {
        0
    } else {
        1
    };
    let json = json!({
        "schema": SCHEMA_EQUIV,
        "pass": ok,
        "verdicts": verdicts,
    });
    let header = vec!["id", "d", "mode", "k", "max_rel_dev", "pass", "expected", "error"];
    Ok((Report::new(json, header, verdict_rows(&verdicts)), code))
}

fn read_sample(path: &PathBuf, d: usize) -> Result<Sample, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if row.len() < d {
                    return Err(Error::Dimension(format!(
                        "{}: row {} has {} columns, expected at least {d}",
                        path.display(),
                        i + 1,
                        row.len()
                    )));
                }
                rows.push(row[..d].to_vec());
            }
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Argument(format!("{}: row {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Sample::new(rows)
}

fn cmd_gof(a: &GofArgs, seed: u64) -> Result<(Report, u8), Error> {
    if let Some(alpha) = a.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Argument(format!("--alpha must lie in (0, 1), got {alpha}")));
        }
    }
    let sample = read_sample(&a.data, a.dim)?;
    let margins = match &a.margins {
        Some(m) => parse_margins(m)?,
        None => parse_margins(&vec!["uniform"; a.dim].join(","))?,
    };
    let source = match a.source {
        SourceArg::Secular => SpectrumSource::Secular {
            modes: a.modes.unwrap_or_else(|| default_modes(a.dim)),
        },
        SourceArg::Nystrom => SpectrumSource::Nystrom { n: a.grid },
    };
    let method = match a.method {
        PMethodArg::Imhof => PValueMethod::Imhof,
        PMethodArg::Montecarlo => PValueMethod::Montecarlo { reps: a.reps, seed },
    };
    let r = gof_test(&sample, &margins, source, method)?;
    let rejected = a.alpha.is_some_and(|alpha| r.p_value < alpha);
    let mut json = serde_json::to_value(&r).expect("serializable");
    json["schema"] = json!(SCHEMA_GOF);
    json["data"] = json!(a.data.display().to_string());
    if let Some(alpha) = a.alpha {
        json["alpha"] = json!(alpha);
        json["rejected"] = json!(rejected);
    }
    let rows = vec![
        vec!["statistic".into(), r.statistic.to_string()],
        vec!["scaled_statistic".into(), r.scaled_statistic.to_string()],
        vec!["n".into(), r.n.to_string()],
        vec!["d".into(), r.d.to_string()],
        vec!["p_value".into(), r.p_value.to_string()],
        vec!["eigenvalues_kept".into(), r.diagnostics.eigenvalues_kept.to_string()],
    ];
    Ok((Report::new(json, vec!["field", "value"], rows), u8::from(rejected)))
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<(Report, u8), Error> {
    let (label, expr) = a.operand.resolve(a.dim)?;
    let cfg = McConfig::new(a.reps, seed, a.modes);
    let draws = sample_sqnorm(&expr, a.dim, a.grid, &cfg)?;
    let (mean, se) = mean_and_se(&draws);
    let json = json!({
        "schema": SCHEMA_SIMULATE,
        "operator": label,
        "expression": format(&expr),
        "d": a.dim,
        "grid": a.grid,
        "config": cfg,
        "mean": mean,
        "standard_error": se,
        "draws": draws,
    });
    let rows = draws.iter().map(|v| vec![v.to_string()]).collect();
    Ok((Report::new(json, vec!["sqnorm"], rows), 0))
}

fn cmd_table(a: &TableArgs) -> Result<(Report, u8), Error> {
    let cases = [(2usize, 300usize, 15.814), (3, 80, 30.196)];
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (d, modes, reference) in cases {
        let s = pinned_sheet_spectrum(d, modes, a.top)?;
        for (i, v) in s.values.iter().enumerate() {
            rows.push(vec![
                d.to_string(),
                modes.to_string(),
                (i + 1).to_string(),
                v.to_string(),
                (1.0 / v).to_string(),
            ]);
        }
        entries.push(json!({
            "d": d,
            "modes": modes,
            "eigenvalues": s.values,
            "reciprocals": s.reciprocals(),
            "reference_first_reciprocal": reference,
            "parseval_deficit": s.parseval_deficit,
        }));
    }
    let json = json!({ "schema": SCHEMA_TABLE, "fields": entries });
    Ok((
        Report::new(json, vec!["d", "modes", "index", "eigenvalue", "reciprocal"], rows),
        0,
    ))
}

fn run(cli: &Cli) -> Result<u8, Error> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Argument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    }
    let (report, code, default_format) = match &cli.command {
        Command::Spectrum(a) => {
            let (r, c) = cmd_spectrum(a)?;
            (r, c, Format::Json)
        }
        Command::Equiv(a) => {
            let (r, c) = cmd_equiv(a)?;
            (r, c, Format::Json)
        }
        Command::Gof(a) => {
            let (r, c) = cmd_gof(a, cli.seed)?;
            (r, c, Format::Json)
        }
        Command::Simulate(a) => {
            let (r, c) = cmd_simulate(a, cli.seed)?;
            (r, c, Format::Csv)
        }
        Command::Table(a) => {
            let (r, c) = cmd_table(a)?;
            (r, c, Format::Tsv)
        }
    };
    report.write(cli.format.unwrap_or(default_format), cli.out.as_deref())?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use specequiv::catalog::FAMILIES;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_family_resolves() {
        for (family, _, dims) in FAMILIES {
            assert!(!theorem_pairs_for(family, dims[0]).unwrap().is_empty());
        }
        assert_eq!(theorem_pairs_for("rel-a[0.5]", 1).unwrap().len(), 1);
        assert!(theorem_pairs_for("rel-a[0.5", 1).is_err());
    }

    #[test]
    fn sides_accept_names_and_expressions() {
        assert_eq!(resolve_side("wiener", 1).unwrap(), parse("T T'").unwrap());
        assert_eq!(resolve_side("T T'", 1).unwrap(), parse("T T'").unwrap());
        assert!(resolve_side("T (", 1).is_err());
    }
}
