//! `shess` — distortion optimization of tetrahedral meshes from the shell.
//!
//! Subcommands: `optimize` runs the projected-Newton solver on a
//! `.node`/`.ele` pair, `verify` cross-checks the analytic element Hessian
//! against the finite-difference and entry-wise oracles on random elements,
//! and `eig` prints the analytic factorization of a single element.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::error::Error;
use std::path::PathBuf;

use stretch_hessian::assembly::{self, ConstraintSet};
use stretch_hessian::eigsys::{factorize_element, HESSIAN_PAIRS};
use stretch_hessian::energy::{self, EnergyModel};
use stretch_hessian::meshio;
use stretch_hessian::oracle::{self, sampling};
use stretch_hessian::smallmat::jacobi_eig;
use stretch_hessian::solver::{self, SolveStatus, SolverConfig};
use stretch_hessian::svd_diff;

#[derive(Parser)]
#[command(
    name = "shess",
    version,
    about = "Principal-stretch distortion optimization on tetrahedral meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the mesh distortion energy with projected Newton.
    Optimize(OptimizeArgs),
    /// Compare analytic, entry-wise and finite-difference element Hessians
    /// on seeded random elements and report the largest relative errors.
    Verify(VerifyArgs),
    /// Print the analytic Hessian factorization of one element.
    Eig(EigArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EnergyId {
    Arap,
    Symdirichlet,
    Neohookean,
}

impl EnergyId {
    fn as_str(self) -> &'static str {
        match self {
            EnergyId::Arap => "arap",
            EnergyId::Symdirichlet => "symdirichlet",
            EnergyId::Neohookean => "neohookean",
        }
    }
}

fn build_model(
    id: EnergyId,
    mu: Option<f64>,
    lambda: Option<f64>,
) -> Result<Box<dyn EnergyModel<f64>>, Box<dyn Error>> {
    let mut params = BTreeMap::new();
    if let Some(mu) = mu {
        params.insert("mu".to_string(), mu);
    }
    if let Some(lambda) = lambda {
        params.insert("lambda".to_string(), lambda);
    }
    Ok(energy::by_id::<f64>(id.as_str(), &params)?)
}

#[derive(Args)]
struct OptimizeArgs {
    /// TetGen vertex file.
    #[arg(long)]
    node: PathBuf,
    /// TetGen tetrahedron file.
    #[arg(long)]
    ele: PathBuf,
    /// Distortion energy model.
    #[arg(long, value_enum)]
    energy: EnergyId,
    /// Shear modulus (neohookean only; defaults to 1).
    #[arg(long)]
    mu: Option<f64>,
    /// First Lame parameter (neohookean only; defaults to 1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Pin file, one `vertex_id tx ty tz` per line.
    #[arg(long)]
    pins: Option<PathBuf>,
    /// Output vertex file for the optimized pose.
    #[arg(long)]
    out_node: PathBuf,
    /// Output CSV with one row per accepted iteration.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Gradient infinity-norm tolerance; defaults to 1e-6 times the mesh
    /// bounding-box diagonal.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative clamp threshold of the SPD projection.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<i32, Box<dyn Error>> {
    let (mesh, reordered) = meshio::load_tetgen::<f64>(&args.node, &args.ele)?;
    if reordered > 0 {
        eprintln!("warning: reordered {reordered} negative-volume tetrahedra");
    }
    let constraints = match &args.pins {
        Some(path) => meshio::load_pins::<f64>(path)?,
        None => ConstraintSet::new(),
    };
    constraints.validate(mesh.vertex_count())?;
    let model = build_model(args.energy, args.mu, args.lambda)?;
    let cfg = SolverConfig::<f64> {
        max_iters: args.max_iters,
        grad_tol: args.tol,
        eps: args.eps,
        ..Default::default()
    };

    println!(
        "mesh: {} vertices, {} tetrahedra; {} pinned; energy={}",
        mesh.vertex_count(),
        mesh.tet_count(),
        constraints.len(),
        model.id()
    );
    let (result, trace) = solver::minimize(&mesh, &*model, &constraints, &cfg)?;
    meshio::save_node(&result, &args.out_node)?;
    meshio::save_trace_csv(&trace, &args.trace)?;

    let (status_str, code) = match trace.status {
        SolveStatus::Converged => ("converged", 0),
        SolveStatus::MaxIters => ("stopped at the iteration budget", 2),
        SolveStatus::StepUnderflow => ("stopped on step underflow", 2),
        SolveStatus::Inadmissible => ("start pose outside the admissible domain", 1),
    };
    match trace.records.last() {
        Some(last) => println!(
            "{status_str} after {} iterations: energy {:.6e}, grad_inf {:.3e}",
            trace.records.len(),
            last.energy,
            last.grad_inf
        ),
        None => println!("{status_str} after 0 iterations"),
    }
    println!(
        "wrote {} and {}",
        args.out_node.display(),
        args.trace.display()
    );
    Ok(code)
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of random elements per energy model.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Restrict to one energy model (default: all three).
    #[arg(long, value_enum)]
    energy: Option<EnergyId>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative clamp threshold of the SPD projection.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Element count for the projection speed comparison (0 disables).
    #[arg(long, default_value_t = 100_000)]
    perf_elements: usize,
}

struct Tolerance {
    label: &'static str,
    value: f64,
    limit: f64,
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, Box<dyn Error>> {
    use rand::SeedableRng;

    if args.samples == 0 {
        return Err("--samples must be at least 1".into());
    }
    let ids = match args.energy {
        Some(id) => vec![id],
        None => vec![EnergyId::Arap, EnergyId::Symdirichlet, EnergyId::Neohookean],
    };

    let mut all_ok = true;
    for id in ids {
        let model = build_model(id, args.mu, args.lambda)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
        let opts = sampling::SampleOpts::default();
        let grad_scheme = oracle::FdScheme { h: 1e-5 };
        let hess_scheme = oracle::FdScheme { h: 1e-4 };

        let mut max_entrywise = 0.0f64;
        let mut max_fd = 0.0f64;
        let mut max_grad = 0.0f64;
        let mut max_net = 0.0f64;
        let mut max_null = 0.0f64;
        let mut min_eig_ratio = 0.0f64;

        for _ in 0..args.samples {
            let s: sampling::SampledElement<f64> = sampling::sample_element(&mut rng, &opts);
            let fact = factorize_element(&*model, &s.svd, &s.dfdx)?;
            let h = fact.element_hessian();

            let entrywise = oracle::hessian_entrywise(&*model, &s.svd, &s.dfdx)?;
            max_entrywise = max_entrywise.max(oracle::rel_frob_diff12(&h, &entrywise));

            let fd = oracle::fd_hessian(&*model, &s.dm_inv, &s.x, &hess_scheme)?;
            max_fd = max_fd.max(oracle::rel_frob_diff12(&h, &fd));

            let eval = model.evaluate(&s.svd.sigma)?;
            let sgrad = svd_diff::sigma_gradient(&s.svd, &s.dfdx);
            let grad = svd_diff::kernel_gradient(&eval.grad, &sgrad);
            let fd_grad = oracle::fd_gradient(&*model, &s.dm_inv, &s.x, &grad_scheme)?;
            for c in 0..12 {
                max_grad =
                    max_grad.max((grad[c] - fd_grad[c]).abs() / grad[c].abs().max(1.0));
            }
            for p in 0..3 {
                max_net =
                    max_net.max((grad[p] + grad[3 + p] + grad[6 + p] + grad[9 + p]).abs());
            }

            let norm = oracle::frob12(&h);
            for p in 0..3 {
                let mut t = [0.0; 12];
                for v in 0..4 {
                    t[3 * v + p] = 1.0;
                }
                let ht = oracle::mat12_mul_vec(&h, &t);
                let r = ht.iter().fold(0.0f64, |a, x| a + x * x).sqrt();
                max_null = max_null.max(r / norm.max(1e-30));
            }

            min_eig_ratio = min_eig_ratio.min(projected_min_eig_ratio(&fact, args.eps));
        }

        // Degenerate stress: repeated stretches, where the quotient-based
        // oracle is singular by design but the projection must stay sound.
        for _ in 0..100 {
            use rand::Rng;
            let base = rng.gen_range(0.6..1.8);
            let other = rng.gen_range(0.6..1.8);
            let s: sampling::SampledElement<f64> = sampling::sample_element_with_sigma(
                &mut rng,
                [base, base + 1e-12, other],
                false,
            );
            let fact = factorize_element(&*model, &s.svd, &s.dfdx)?;
            min_eig_ratio = min_eig_ratio.min(projected_min_eig_ratio(&fact, args.eps));
        }

        let checks = [
            Tolerance {
                label: "hessian analytic vs entry-wise (rel frobenius)",
                value: max_entrywise,
                limit: 1e-8,
            },
            Tolerance {
                label: "hessian analytic vs finite-diff (rel frobenius)",
                value: max_fd,
                limit: 1e-5,
            },
            Tolerance {
                label: "gradient analytic vs finite-diff (rel)",
                value: max_grad,
                limit: 1e-6,
            },
            Tolerance {
                label: "net vertex derivative (abs)",
                value: max_net,
                limit: 1e-12,
            },
            Tolerance {
                label: "translation null space (rel)",
                value: max_null,
                limit: 1e-10,
            },
            Tolerance {
                label: "projected min eigenvalue (rel, incl 100 degenerate)",
                value: -min_eig_ratio,
                limit: 1e-8,
            },
        ];
        println!(
            "model={} samples={} seed={}",
            model.id(),
            args.samples,
            args.seed
        );
        for c in &checks {
            let ok = c.value <= c.limit;
            all_ok &= ok;
            println!(
                "  {:<52} {:9.3e}  (tol {:.0e})  {}",
                c.label,
                c.value,
                c.limit,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }

    if args.perf_elements > 0 {
        let model = build_model(EnergyId::Arap, None, None)?;
        let bench =
            oracle::projection_speed_benchmark(&*model, args.perf_elements, args.seed, args.eps);
        println!(
            "perf: analytic factorize+project {} elements in {:.3} s; jacobi 12x12 + clamp in {:.3} s; speedup {:.1}x (target >= 3)",
            bench.elements, bench.analytic_seconds, bench.jacobi_seconds, bench.speedup()
        );
    }

    if all_ok {
        println!("VERIFY PASS");
        Ok(0)
    } else {
        println!("VERIFY FAIL");
        Ok(2)
    }
}

fn projected_min_eig_ratio(
    fact: &stretch_hessian::eigsys::ElementFactorization<f64>,
    eps: f64,
) -> f64 {
    let projected = fact.project_spd(eps);
    let flat: Vec<f64> = projected.matrix.iter().flatten().copied().collect();
    let eig = jacobi_eig(&flat, 12).expect("symmetric projected matrix");
    let spectral = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    eig.values[0] / spectral.max(1e-30)
}

#[derive(Args)]
struct EigArgs {
    /// TetGen vertex file.
    #[arg(long)]
    node: PathBuf,
    /// TetGen tetrahedron file.
    #[arg(long)]
    ele: PathBuf,
    /// Element index (0-based).
    #[arg(long)]
    element: usize,
    #[arg(long, value_enum)]
    energy: EnergyId,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative clamp threshold of the SPD projection.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Also print numerically computed spectra for comparison.
    #[arg(long, default_value_t = false)]
    oracle: bool,
}

fn cmd_eig(args: &EigArgs) -> Result<i32, Box<dyn Error>> {
    let (mesh, _) = meshio::load_tetgen::<f64>(&args.node, &args.ele)?;
    if args.element >= mesh.tet_count() {
        return Err(format!(
            "element {} out of range: the mesh has {} tetrahedra",
            args.element,
            mesh.tet_count()
        )
        .into());
    }
    let model = build_model(args.energy, args.mu, args.lambda)?;
    let refs = assembly::precompute(&mesh)?;
    let svd = assembly::element_svd(&mesh, &refs, args.element);
    let fact = factorize_element(&*model, &svd, &refs[args.element].dfdx)?;
    let report = fact.clamp_report(args.eps);

    println!(
        "element {} (energy={}): sigma = ({}, {}, {})",
        args.element,
        model.id(),
        svd.sigma[0],
        svd.sigma[1],
        svd.sigma[2]
    );
    println!(
        "stretch block eigenvalues: {} {} {}",
        report.stretch_values[0], report.stretch_values[1], report.stretch_values[2]
    );
    for (idx, &(a, b)) in HESSIAN_PAIRS.iter().enumerate() {
        let pair = report.pair_values[idx];
        let mark = |clamped: bool| if clamped { " [clamped]" } else { "" };
        println!(
            "pair ({a},{b}): twist {}{}  flip {}{}",
            pair.twist,
            mark(report.pair_clamped[idx][0]),
            pair.flip,
            mark(report.pair_clamped[idx][1])
        );
    }
    println!(
        "clamp threshold {} (eps {}): {} of 9 values clamped",
        report.threshold, args.eps, report.clamp_count
    );

    if args.oracle {
        let h9 = fact.hessian_fixed_vertex0();
        let flat: Vec<f64> = h9.iter().flatten().copied().collect();
        let eig9 = jacobi_eig(&flat, 9)?;
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.9e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!("oracle spectrum (gradient-space 9x9): {}", fmt(&eig9.values));
        let h12 = fact.element_hessian();
        let flat: Vec<f64> = h12.iter().flatten().copied().collect();
        let eig12 = jacobi_eig(&flat, 12)?;
        println!("oracle spectrum (vertex-space 12x12): {}", fmt(&eig12.values));
    }
    Ok(0)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };

    if let Ok(threads) = std::env::var("SH_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            _ => eprintln!("warning: ignoring invalid SH_THREADS value `{threads}`"),
        }
    }

    let result = match &cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Eig(args) => cmd_eig(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
