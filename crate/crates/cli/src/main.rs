use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use aeppli_core::cohomology::{all_bidegrees, cohomology_dims, OperatorBundle};
use aeppli_core::complex::{build_complex, FormComplex};
use aeppli_core::deform::{family_diagnostics, kahler_in_class, FamilyConfig, FamilySpec};
use aeppli_core::energy::{corollary_check, differential, energy, gradient_descent, real_gradient, AeppliPoint, FlowOptions};
use aeppli_core::error::{Error, Result};
use aeppli_core::forms::{Bidegree, C64};
use aeppli_core::linalg::RANK_CUTOFF;
use aeppli_core::metric::{potential_from_entries, HermitianStructure};
use aeppli_core::model::{builtin, parse_complex_list, parse_model, parse_template, ModelFile};
use aeppli_core::positivity::{check_weak_positivity, SamplerSpec};
use aeppli_core::report::{format_complex, format_opt, format_real};
use aeppli_core::torsion::{classify, scale_tolerance, torsion_form};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

const ORACLE_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "aeppli", version, about = "Hermitian-symplectic torsion, energy and Kähler diagnostics on form complexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Model file, or `builtin:flat_torus`, `builtin:iwasawa`, `builtin:perturbed_spectral`.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Directory for report.txt and CSV files; CSV goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Gradient-norm stopping tolerance of the flow.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Seed of the positivity sampler.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[arg(long, global = true)]
    max_iters: Option<usize>,

    /// Positivity floor of the flow, as a fraction of the starting margin.
    #[arg(long, global = true)]
    margin_floor: Option<f64>,

    /// Bidegree `p,q` to tabulate (repeatable).
    #[arg(long = "bidegree", global = true, value_parser = parse_bidegree)]
    bidegrees: Vec<Bidegree>,

    /// Comma-separated family parameters, e.g. `0,0.1,0.05i`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    t_samples: Option<String>,

    /// Flow each family member inside its Aeppli class before measuring.
    #[arg(long, global = true)]
    preflow: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Kähler / SKT / balanced / strongly Gauduchon / Hermitian-symplectic flags.
    Classify,
    /// The (2,0)-torsion form of a Hermitian-symplectic metric.
    Torsion,
    /// Energy, gradient and the positivity corollary along the file potential.
    Energy,
    /// Gradient descent of the energy inside the Aeppli class.
    Flow,
    /// Minimal-norm Kähler metric in the Aeppli class.
    Kahler,
    /// Diagnostics over a parameter family.
    Family,
    /// Runs the built-in model suite.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Torsion => "torsion",
            Command::Energy => "energy",
            Command::Flow => "flow",
            Command::Kahler => "kahler",
            Command::Family => "family",
            Command::Selftest => "selftest",
        }
    }
}

fn parse_bidegree(s: &str) -> std::result::Result<Bidegree, String> {
    let (p, q) = s.split_once(',').ok_or_else(|| format!("expected p,q, got `{s}`"))?;
    let p = p.trim().parse().map_err(|_| format!("bad p in `{s}`"))?;
    let q = q.trim().parse().map_err(|_| format!("bad q in `{s}`"))?;
    Ok(Bidegree::new(p, q))
}

/// Report text plus named CSV attachments.
struct Output {
    text: String,
    csv: Vec<(&'static str, String)>,
}

impl Output {
    fn new() -> Self {
        Self { text: String::new(), csv: Vec::new() }
    }

    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key}={value}");
    }
}

struct Loaded {
    label: String,
    text: String,
}

fn load_model_text(cli: &Cli) -> Result<Loaded> {
    let arg = cli.model.as_deref().ok_or_else(|| Error::Validation("--model is required".into()))?;
    let text = match arg.strip_prefix("builtin:") {
        Some("flat_torus") => builtin::FLAT_TORUS.to_string(),
        Some("iwasawa") => builtin::IWASAWA.to_string(),
        Some("perturbed_spectral") => builtin::PERTURBED_SPECTRAL.to_string(),
        Some(other) => return Err(Error::Validation(format!("unknown built-in model `{other}`"))),
        None => std::fs::read_to_string(arg)?,
    };
    Ok(Loaded { label: arg.to_string(), text })
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn flow_options(cli: &Cli) -> FlowOptions {
    let d = FlowOptions::default();
    FlowOptions {
        max_iters: cli.max_iters.unwrap_or(d.max_iters),
        tol: cli.tol.unwrap_or(d.tol),
        margin_floor: cli.margin_floor.unwrap_or(d.margin_floor),
        ..d
    }
}

fn header(out: &mut Output, cli: &Cli, model: Option<&Loaded>, defect_tol: Option<f64>) {
    let flow = flow_options(cli);
    let _ = writeln!(out.text, "# aeppli {}", env!("CARGO_PKG_VERSION"));
    out.kv("command", cli.command.name());
    if let Some(m) = model {
        out.kv("model", &m.label);
        out.kv("model_sha256", sha256_hex(&m.text));
    }
    if let Some(t) = defect_tol {
        out.kv("tol_defect", format_real(t));
    }
    out.kv("tol_rank_cutoff", format_real(RANK_CUTOFF));
    out.kv("tol_oracle", format_real(ORACLE_TOL));
    out.kv("flow_tol", format_real(flow.tol));
    out.kv("flow_max_iters", flow.max_iters);
    out.kv("flow_margin_floor", format_real(flow.margin_floor));
    out.kv("armijo_c", format_real(flow.armijo_c));
    out.kv("seed", cli.seed);
}

/// The file metric as an Aeppli point: base metric plus the (1,0)-potential.
struct Setup {
    complex: Arc<FormComplex>,
    point: AeppliPoint,
}

fn setup(file: &ModelFile) -> Result<Setup> {
    let complex = Arc::new(build_complex(&file.model)?);
    let base = Arc::new(HermitianStructure::from_entries(complex.clone(), &file.metric)?);
    let u = potential_from_entries(&complex, &file.potential)?;
    let point = AeppliPoint::new(base, u)?;
    Ok(Setup { complex, point })
}

fn bidegrees_or(cli: &Cli, default: Vec<Bidegree>) -> Vec<Bidegree> {
    if cli.bidegrees.is_empty() {
        default
    } else {
        cli.bidegrees.clone()
    }
}

fn sampler(cli: &Cli) -> SamplerSpec {
    SamplerSpec { seed: cli.seed, ..SamplerSpec::default() }
}

fn write_classification(out: &mut Output, h: &HermitianStructure, prefix: &str) -> Result<()> {
    let cl = classify(h)?;
    let residual_of = ["d_omega", "ddbar_omega", "d_omega_n1", "sg_distance", "hs_residual"];
    for ((flag, value), res) in cl.flags().iter().zip(residual_of) {
        let _ = writeln!(
            out.text,
            "{prefix}{flag}={value} {res}={} tolerance={}",
            format_real(cl.residual(res).unwrap_or(f64::NAN)),
            format_real(cl.tolerance)
        );
    }
    Ok(())
}

fn cmd_classify(cli: &Cli, out: &mut Output) -> Result<()> {
    let loaded = load_model_text(cli)?;
    let s = setup(&parse_model(&loaded.text)?)?;
    let h = s.point.realized().clone();
    header(out, cli, Some(&loaded), Some(scale_tolerance(&h)));
    out.kv("n", s.complex.n());
    out.kv("modes", s.complex.modes().len());
    out.kv("volume", format_real(h.volume()));
    out.kv("positivity_margin", format_real(h.positivity_margin()));
    let pos = check_weak_positivity(&s.complex, h.omega(), sampler(cli))?;
    out.kv("omega_positivity", pos.verdict.label());
    write_classification(out, &h, "")?;
    let bundle = OperatorBundle::new(h);
    let table = cohomology_dims(&bundle, &bidegrees_or(cli, all_bidegrees(s.complex.n())))?;
    out.csv.push(("cohomology.csv", table.to_string()));
    Ok(())
}

fn cmd_torsion(cli: &Cli, out: &mut Output) -> Result<()> {
    let loaded = load_model_text(cli)?;
    let s = setup(&parse_model(&loaded.text)?)?;
    let h = s.point.realized().clone();
    header(out, cli, Some(&loaded), Some(scale_tolerance(&h)));
    let rep = torsion_form(&OperatorBundle::new(h.clone()))?;
    out.kv("hermitian_symplectic", true);
    out.kv("rho_norm_sq", format_real(h.norm_sq(&rep.rho20)?));
    out.kv("residual_constraint", format_real(rep.residual_constraint));
    out.kv("residual_closed", format_real(rep.residual_closed));
    out.kv("minimality_gap", format_real(rep.minimality_gap));
    let basis = s.complex.algebra().basis(rep.rho20.bidegree());
    let floor = 1e-12 * (1.0 + rep.rho20.coeff_norm());
    let mut csv = String::from("index,mode,monomial,rho20\n");
    for ((k, z), b) in rep.rho20.coeffs().iter().enumerate().zip(&basis) {
        if z.norm() > floor {
            let dz = b.holo.iter().map(|i| format!("dz{}", i + 1));
            let dzb = b.anti.iter().map(|i| format!("dzb{}", i + 1));
            let mono: Vec<String> = dz.chain(dzb).collect();
            let _ = writeln!(csv, "{k},{},{},{}", b.mode, mono.join("^"), format_complex(*z));
        }
    }
    out.csv.push(("torsion.csv", csv));
    Ok(())
}

fn cmd_energy(cli: &Cli, out: &mut Output) -> Result<()> {
    let loaded = load_model_text(cli)?;
    let s = setup(&parse_model(&loaded.text)?)?;
    let pt = &s.point;
    header(out, cli, Some(&loaded), Some(scale_tolerance(pt.realized())));
    let f = energy(pt)?;
    let g = real_gradient(pt)?;
    out.kv("F", format_real(f));
    out.kv("gradient_norm", format_real(g.norm()));
    out.kv("positivity_margin", format_real(pt.positivity_margin()));
    let xi = pt.potential().clone();
    // The real gradient and the directional differential are assembled separately.
    let d = xi.len();
    let along: f64 = (0..d).map(|k| g[k] * xi.coeffs()[k].re + g[d + k] * xi.coeffs()[k].im).sum();
    let direct = differential(pt, &xi)?;
    let gap = (along - direct).abs();
    out.kv("differential_along_potential", format_real(direct));
    out.kv("gradient_pairing_gap", format_real(gap));
    if gap > ORACLE_TOL * (1.0 + direct.abs()) {
        return Err(Error::Contract(format!("gradient pairing differs from d_ωF(u) by {gap:.3e}")));
    }
    match corollary_check(pt, &xi, sampler(cli)) {
        Ok(rep) => {
            out.kv("corollary_positivity", rep.positivity.verdict.label());
            out.kv("corollary_differential", format_real(rep.differential_special));
            out.kv("corollary_conclusion", format!("{:?}", rep.conclusion).to_lowercase());
            if !rep.consistent {
                return Err(Error::Contract("corollary concluded Kähler but ρ ≠ 0".into()));
            }
        }
        Err(Error::Precondition { what, residual }) => {
            out.kv("corollary", format!("skipped ({what}, residual {})", format_real(residual)));
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn cmd_flow(cli: &Cli, out: &mut Output) -> Result<()> {
    let loaded = load_model_text(cli)?;
    let s = setup(&parse_model(&loaded.text)?)?;
    header(out, cli, Some(&loaded), Some(scale_tolerance(s.point.realized())));
    let base = s.point.base().clone();
    let trace = gradient_descent(s.point, flow_options(cli))?;
    out.csv.push(("trace.csv", trace.to_csv()));
    let last = trace.last();
    out.kv("status", trace.status.label());
    out.kv("iterations", trace.iterates.len() - 1);
    out.kv("F_initial", format_real(trace.iterates[0].energy));
    out.kv("F_final", format_real(last.energy));
    out.kv("grad_norm_final", format_real(last.grad_norm));
    out.kv("margin_final", format_real(last.margin));
    let end = AeppliPoint::new(base, last.potential.clone())?;
    out.kv("d_omega_final", format_real(s.complex.d_norm(end.realized().omega())?));
    write_classification(out, end.realized(), "final_")?;
    if !trace.is_monotone() {
        return Err(Error::Contract("energy increased along the flow".into()));
    }
    Ok(())
}

fn cmd_kahler(cli: &Cli, out: &mut Output) -> Result<()> {
    let loaded = load_model_text(cli)?;
    let s = setup(&parse_model(&loaded.text)?)?;
    let h = s.point.realized().clone();
    header(out, cli, Some(&loaded), Some(scale_tolerance(&h)));
    let rep = kahler_in_class(&OperatorBundle::new(h.clone()))?;
    out.kv("hypothesis_distance", format_real(rep.hypothesis_distance));
    out.kv("u_min_norm", format_real(h.norm(&rep.u_min)?));
    out.kv("d_residual", format_real(rep.d_residual));
    out.kv("aeppli_defect", format_real(rep.aeppli_defect));
    out.kv("margin", format_real(rep.margin));
    out.kv("positive", rep.is_positive());
    Ok(())
}

fn cmd_family(cli: &Cli, out: &mut Output) -> Result<()> {
    let loaded = load_model_text(cli)?;
    let template = parse_template(&loaded.text)?;
    let samples: Option<Vec<C64>> = cli.t_samples.as_deref().map(parse_complex_list).transpose()?;
    let spec = FamilySpec::new(template, samples)?;
    header(out, cli, Some(&loaded), None);
    let config = FamilyConfig {
        bidegrees: bidegrees_or(cli, FamilyConfig::default().bidegrees),
        preflow: cli.preflow.then(|| flow_options(cli)),
        ..FamilyConfig::default()
    };
    out.kv("t_samples", spec.samples.iter().map(|t| format_complex(*t)).collect::<Vec<_>>().join(","));
    let table = family_diagnostics(&spec, &config)?;
    out.kv("rho_diff_order", format_opt(table.observed_order(|r| r.rho_diff)));
    out.kv("crit_diff_order", format_opt(table.observed_order(|r| r.crit_diff)));
    out.kv("flagged_rows", table.rows.iter().filter(|r| r.flagged()).count());
    out.csv.push(("family.csv", table.to_csv()));
    Ok(())
}

type Check = (&'static str, std::result::Result<String, String>);

fn selftest_model(name: &str, text: &str) -> Vec<Check> {
    let mut checks = Vec::new();
    let s = match parse_model(text).and_then(|f| setup(&f)) {
        Ok(s) => s,
        Err(e) => return vec![("parse", Err(e.to_string()))],
    };
    let worst = s.complex.identity_residuals().into_iter().fold(0.0, f64::max);
    checks.push(("identities", if worst <= 1e-12 { Ok(format_real(worst)) } else { Err(format_real(worst)) }));
    let h = s.point.realized().clone();
    let expect_hs = name != "iwasawa";
    checks.push((
        "classify",
        match classify(&h) {
            Ok(cl) if cl.hermitian_symplectic == expect_hs => Ok(format!("hermitian_symplectic={expect_hs}")),
            Ok(cl) => Err(format!("hermitian_symplectic={}", cl.hermitian_symplectic)),
            Err(e) => Err(e.to_string()),
        },
    ));
    let bundle = OperatorBundle::new(h.clone());
    checks.push((
        "torsion",
        match (torsion_form(&bundle), expect_hs) {
            (Ok(rep), true) => Ok(format!("rho_norm={}", format_real(rep.rho20.coeff_norm()))),
            (Err(Error::NotHermitianSymplectic { .. }), false) => Ok("refused".into()),
            (Ok(_), false) => Err("accepted a non-Hermitian-symplectic metric".into()),
            (Err(e), _) => Err(e.to_string()),
        },
    ));
    checks.push((
        "kahler",
        match (kahler_in_class(&bundle), expect_hs) {
            (Ok(rep), true) if rep.is_positive() => Ok(format!("d_residual={}", format_real(rep.d_residual))),
            (Ok(rep), true) => Err(format!("margin {}", format_real(rep.margin))),
            (Err(Error::NotInImage { .. }), false) => Ok("hypothesis fails".into()),
            (Ok(_), false) => Err("hypothesis accepted".into()),
            (Err(e), _) => Err(e.to_string()),
        },
    ));
    if expect_hs {
        checks.push((
            "flow",
            match gradient_descent(s.point, FlowOptions::default()) {
                Ok(t) if t.is_monotone() && t.last().energy <= 1e-6 => Ok(format!("F={}", format_real(t.last().energy))),
                Ok(t) => Err(format!("F={} status={}", format_real(t.last().energy), t.status.label())),
                Err(e) => Err(e.to_string()),
            },
        ));
    }
    checks
}

fn cmd_selftest(cli: &Cli, out: &mut Output) -> Result<()> {
    header(out, cli, None, None);
    let mut failures = 0;
    let mut csv = String::from("model,check,result,detail\n");
    for (name, text) in [
        ("flat_torus", builtin::FLAT_TORUS),
        ("iwasawa", builtin::IWASAWA),
        ("perturbed_spectral", builtin::PERTURBED_SPECTRAL),
    ] {
        let checks = selftest_model(name, text);
        let line: Vec<String> = checks
            .iter()
            .map(|(check, r)| format!("{check}={}", if r.is_ok() { "pass" } else { "FAIL" }))
            .collect();
        let _ = writeln!(out.text, "{name}: {}", line.join(" "));
        for (check, r) in checks {
            let (result, detail) = match r {
                Ok(d) => ("pass", d),
                Err(d) => {
                    failures += 1;
                    ("fail", d)
                }
            };
            let _ = writeln!(csv, "{name},{check},{result},{}", aeppli_core::report::csv_field(&detail));
        }
    }
    out.csv.push(("selftest.csv", csv));
    out.kv("failures", failures);
    if failures > 0 {
        return Err(Error::Contract(format!("{failures} selftest check(s) failed")));
    }
    Ok(())
}

fn emit(out: &Output, dir: Option<&Path>) -> Result<()> {
    print!("{}", out.text);
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("report.txt"), &out.text)?;
            for (name, body) in &out.csv {
                std::fs::write(dir.join(name), body)?;
            }
        }
        None => {
            for (name, body) in &out.csv {
                print!("\n# {name}\n{body}");
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_contract_violation() {
        2
    } else {
        1
    }
}

fn run(cli: &Cli) -> u8 {
    let mut out = Output::new();
    let result = match cli.command {
        Command::Classify => cmd_classify(cli, &mut out),
        Command::Torsion => cmd_torsion(cli, &mut out),
        Command::Energy => cmd_energy(cli, &mut out),
        Command::Flow => cmd_flow(cli, &mut out),
        Command::Kahler => cmd_kahler(cli, &mut out),
        Command::Family => cmd_family(cli, &mut out),
        Command::Selftest => cmd_selftest(cli, &mut out),
    };
    let emitted = emit(&out, cli.out.as_deref());
    match result.and(emitted) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    ExitCode::from(run(&cli))
}
