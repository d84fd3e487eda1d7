//! Acceptance run: one pass/fail line per criterion, detail lines indented.
//! Exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablab_core::certify::{
    boundary_frame, convex_boundary_sign, rigidity_experiment, robin_certificate, RigidityOptions,
};
use stablab_core::coeff::CoefficientFamily;
use stablab_core::eigen::{smallest_eigenpairs, EigenOptions};
use stablab_core::fem::{
    assemble_residual, integrate_source, mass_matrix, recover_derivatives, stiffness_matrix, Field, NonlinearProblem,
    ScalarFn,
};
use stablab_core::levelset::{curvature_identity_residual, poincare_breakdown, random_smooth_tests};
use stablab_core::mesh::{generate, DomainSpec, Mesh};
use stablab_core::solver::{
    blended_seed, robin_matrices, solve, solve_linear_robin, standard_cosine_seeds, NewtonOptions,
};
use stablab_core::stability::{classify, Classification};

const LEVELS: [f64; 3] = [0.08, 0.04, 0.02];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn detail(mut self, lines: Vec<String>) -> Self {
        self.details = lines;
        self
    }
}

fn mesh(spec: DomainSpec) -> Arc<Mesh<f64>> {
    Arc::new(generate(&spec).expect("mesh generation"))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn bistable(strength: f64) -> ScalarFn<f64> {
    ScalarFn::Bistable { strength }
}

// closed forms of (λ₁(t), a(t)) for the built-in families
fn closed_form(k: usize, t: f64) -> (f64, f64) {
    match k {
        0 => (1.0, 1.0),
        1 => (2.0 * t, t),
        _ => ((1.0 + t * t).powf(-1.5), (1.0 + t * t).powf(-0.5)),
    }
}

fn sorted_pair(a: f64, b: f64) -> [f64; 2] {
    [a.min(b), a.max(b)]
}

fn operator_spectrum() -> Outcome {
    let families = [
        CoefficientFamily::laplacian(),
        CoefficientFamily::p_laplacian(3.0).unwrap(),
        CoefficientFamily::mean_curvature(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut from_entries, mut reported) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let r = 10f64.powf(rng.gen_range(-2.0..1.0));
        let th = rng.gen_range(0.0..2.0 * PI);
        let xi = [r * th.cos(), r * th.sin()];
        let op = families[k % 3].matrix_a(xi).unwrap();
        let (l1, a) = closed_form(k % 3, r);
        let want = sorted_pair(l1, a);
        // eigenvalues of the entries: larger from the trace, smaller from det
        let m = op.entries;
        let mean = 0.5 * (m[0][0] + m[1][1]);
        let dev = (0.5 * (m[0][0] - m[1][1])).hypot(m[0][1]);
        let big = mean + dev;
        let small = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / big;
        let got = sorted_pair(small, big);
        let rep = op.eigenvalues();
        for j in 0..2 {
            from_entries = from_entries.max((got[j] - want[j]).abs() / want[j]);
            reported = reported.max((rep[j] - want[j]).abs() / want[j]);
        }
    }
    let worst = from_entries.max(reported);
    Outcome::new(
        worst <= 1e-12,
        format!(
            "operator spectrum: max relative error {from_entries:.2e} (entries), {reported:.2e} (reported) over 1000 samples, |ξ| in [0.01, 10] (tol 1e-12)"
        ),
    )
}

fn curvature_identity() -> Outcome {
    let maxes: Vec<f64> = LEVELS
        .iter()
        .map(|&h| {
            let m = mesh(DomainSpec::annulus(0.5, 1.0, h));
            let u = Field::from_fn(m, |x, y| 0.5 * (x * x + y * y));
            max_abs(&curvature_identity_residual(&u))
        })
        .collect();
    let ratios = [maxes[1] / maxes[0], maxes[2] / maxes[1]];
    let halves = ratios.iter().all(|r| (r - 0.5).abs() <= 0.15);
    let pass = halves && maxes[2] < 0.05;
    Outcome::new(
        pass,
        format!(
            "curvature identity on the annulus: max residual {:.3e} {:.3e} {:.3e}, ratios {:.3} {:.3} (0.5 ± 30%), finest < 0.05",
            maxes[0], maxes[1], maxes[2], ratios[0], ratios[1]
        ),
    )
}

fn constant_stability() -> Outcome {
    let m = mesh(DomainSpec::disk(1.0, 0.04));
    let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
    let one = classify(&p, &Field::constant(m.clone(), 1.0), None).unwrap().lambda_min;
    let zero = classify(&p, &Field::constant(m, 0.0), None).unwrap().lambda_min;
    let pass = (one - 2.0).abs() <= 1e-3 && (zero + 1.0).abs() <= 1e-3;
    Outcome::new(
        pass,
        format!(
            "constant solutions: lambda_min(u≡1) = {one:.6}, lambda_min(u≡0) = {zero:.6} (targets 2, −1, tol 1e-3)"
        ),
    )
}

fn neumann_spectrum() -> Outcome {
    let mut errs = Vec::new();
    let mut lines = Vec::new();
    for &h in &LEVELS {
        let m = mesh(DomainSpec::rectangle(1.0, 1.0, 0.05, h));
        let sol = smallest_eigenpairs(&stiffness_matrix(&m), &mass_matrix(&m), 3, &EigenOptions::default()).unwrap();
        let mu = sol.pairs[1].value;
        let rel = (mu - PI * PI).abs() / (PI * PI);
        lines.push(format!(
            "h = {h}: second eigenvalue {mu:.6}, relative deviation from π² {rel:.3e}"
        ));
        errs.push(rel);
    }
    let pass = errs[2] <= 0.02 && errs[1] < errs[0] && errs[2] < errs[1];
    Outcome::new(
        pass,
        format!(
            "Neumann spectrum on the rounded square: deviation {:.3e} at h = 0.02 (tol 2%), improving",
            errs[2]
        ),
    )
    .detail(lines)
}

struct Scenario {
    name: &'static str,
    problem: NonlinearProblem<f64>,
    domain: fn(f64) -> DomainSpec,
    seed: fn(&Arc<Mesh<f64>>) -> Field<f64>,
}

fn poincare_scenarios() -> Vec<Scenario> {
    let robin = |fam: CoefficientFamily<f64>, alpha: f64| {
        NonlinearProblem::new(fam, ScalarFn::bistable(), ScalarFn::Linear(alpha))
    };
    let disk: fn(f64) -> DomainSpec = |h| DomainSpec::disk(1.0, h);
    let one: fn(&Arc<Mesh<f64>>) -> Field<f64> = |m| Field::constant(m.clone(), 1.0);
    vec![
        Scenario {
            name: "dumbbell, bistable, Neumann",
            problem: NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable()),
            domain: |h| DomainSpec::dumbbell(0.1, h),
            seed: |m| blended_seed(m, 0.5),
        },
        Scenario {
            name: "disk, bistable, Neumann, u ≡ 1",
            problem: NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable()),
            domain: disk,
            seed: one,
        },
        Scenario {
            name: "disk, Laplacian, Robin α = 0.5",
            problem: robin(CoefficientFamily::laplacian(), 0.5),
            domain: disk,
            seed: one,
        },
        Scenario {
            name: "disk, mean curvature, Robin α = 0.5",
            problem: robin(CoefficientFamily::mean_curvature(), 0.5),
            domain: disk,
            seed: one,
        },
        Scenario {
            name: "disk, p = 3, Robin α = 0.5",
            problem: robin(CoefficientFamily::p_laplacian(3.0).unwrap(), 0.5),
            domain: disk,
            seed: one,
        },
        Scenario {
            name: "disk, p = 3, Robin α = 2",
            problem: robin(CoefficientFamily::p_laplacian(3.0).unwrap(), 2.0),
            domain: disk,
            seed: one,
        },
    ]
}

// slack is compared in units of the largest term so that C is scale free
const POINCARE_C: f64 = 1.0;

fn poincare_inequality() -> Outcome {
    let mut pass = true;
    let mut stable_count = 0;
    let mut lines = Vec::new();
    for sc in poincare_scenarios() {
        let mut observed_c = 0.0f64;
        let mut worst_fine = f64::INFINITY;
        let mut note = String::new();
        for &h in &LEVELS {
            let m = mesh((sc.domain)(h));
            let (u, rep) = solve(&sc.problem, &(sc.seed)(&m), &NewtonOptions::default()).unwrap();
            if !rep.converged {
                note = format!("; no convergence at h = {h}");
                continue;
            }
            let st = classify(&sc.problem, &u, None).unwrap();
            if st.classification != Classification::Stable {
                note = format!("; {} at h = {h}, skipped", st.classification);
                continue;
            }
            stable_count += 1;
            let u = recover_derivatives(&u);
            let mut worst = f64::INFINITY;
            for phi in random_smooth_tests(&m, 20, 7) {
                let b = poincare_breakdown(&sc.problem, &u, &phi).unwrap();
                let scale = b.magnitude();
                let rel = if scale > 0.0 { b.slack / scale } else { 0.0 };
                worst = worst.min(rel);
            }
            observed_c = observed_c.max(-worst / h);
            if worst < -POINCARE_C * h {
                pass = false;
            }
            if h == LEVELS[2] {
                worst_fine = worst;
            }
        }
        lines.push(format!(
            "{}: observed C = {observed_c:.3e}, min relative slack at h = 0.02: {worst_fine:.3e}{note}",
            sc.name
        ));
    }
    pass &= stable_count > 0;
    Outcome::new(
        pass,
        format!("Poincaré inequality: slack/scale ≥ −{POINCARE_C}·h for {stable_count} stable solutions × 20 test functions"),
    )
    .detail(lines)
}

fn rigidity() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut nonconstant = 0;
    for &h in &LEVELS[..2] {
        let m = mesh(DomainSpec::disk(1.0, h));
        for strength in [10.0, 20.0] {
            let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), bistable(strength));
            let opts = RigidityOptions {
                delta_const: Some(1e-4),
                tolerance: Some(1e-6),
                ..RigidityOptions::default()
            };
            let rep = rigidity_experiment(&p, &m, &standard_cosine_seeds(&m), &opts).unwrap();
            let converged: Vec<_> = rep.rows.iter().filter(|r| r.converged).collect();
            let bad = converged
                .iter()
                .filter(|r| !(r.nonconstancy < 1e-4 || r.lambda_min < -1e-6))
                .count();
            let nc = converged.iter().filter(|r| r.nonconstancy >= 1e-4).count();
            nonconstant += nc;
            pass &= bad == 0 && rep.convex;
            lines.push(format!(
                "h = {h}, strength {strength}: {} of 10 converged, {nc} nonconstant, {bad} violations",
                converged.len()
            ));
        }
    }
    Outcome::new(
        pass,
        format!("rigidity on the disk: every converged solution constant or unstable ({nonconstant} nonconstant seen)"),
    )
    .detail(lines)
}

fn fixture_value(key: &str) -> f64 {
    let text = include_str!("fixtures/dumbbell.report");
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .and_then(|(_, v)| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("fixture key {key}"))
}

fn dumbbell() -> Outcome {
    let h = fixture_value("reference_h");
    let m = mesh(DomainSpec::dumbbell(fixture_value("neck_width"), h));
    let p = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
    let (u, rep) = solve(&p, &blended_seed(&m, 0.5), &NewtonOptions::default()).unwrap();
    let st = classify(&p, &u, None).unwrap();
    let reference = fixture_value("reference_lambda_min");
    let pass = rep.converged
        && u.oscillation() > 1e-4
        && st.classification == Classification::Stable
        && (st.lambda_min - reference).abs() <= 1e-4;
    Outcome::new(
        pass,
        format!(
            "dumbbell counterexample: converged {}, nonconstancy {:.4}, lambda_min {:.6} > 0 (fixture {reference})",
            rep.converged,
            u.oscillation(),
            st.lambda_min
        ),
    )
}

fn convex_lemma() -> Outcome {
    const C: f64 = 5.0;
    let radial: fn(&Arc<Mesh<f64>>) -> Field<f64> = |m| Field::from_fn(m.clone(), |x, y| 0.9 * (PI * x.hypot(y)).cos());
    let cases = [
        ("Laplacian", CoefficientFamily::laplacian()),
        ("p = 3", CoefficientFamily::p_laplacian(3.0).unwrap()),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, fam) in cases {
        let p = NonlinearProblem::neumann(fam, bistable(20.0));
        let opts = NewtonOptions {
            continuation_steps: 4,
            ..NewtonOptions::default()
        };
        let mut maxes = Vec::new();
        for &h in &LEVELS {
            let m = mesh(DomainSpec::disk(1.0, h));
            let (u, rep) = solve(&p, &radial(&m), &opts).unwrap();
            let s = convex_boundary_sign(&p, &u).unwrap().max();
            pass &= rep.converged && u.oscillation() > 1e-4 && s <= C * h;
            maxes.push(s);
        }
        // the positive part is what must shrink; a negative maximum already has the sign
        let pos: Vec<f64> = maxes.iter().map(|&s| s.max(0.0)).collect();
        pass &= pos[1] <= pos[0] && pos[2] <= pos[1];
        lines.push(format!(
            "{name}: max {:.4e} {:.4e} {:.4e} at h = 0.08 0.04 0.02",
            maxes[0], maxes[1], maxes[2]
        ));
    }
    Outcome::new(
        pass,
        format!("conormal sign on the disk: max a⟨∇u,Hν⟩ ≤ {C}·h and nonincreasing"),
    )
    .detail(lines)
}

fn frame_norms(alpha: f64, target: f64) -> Vec<[f64; 3]> {
    LEVELS
        .iter()
        .map(|&h| {
            let m = mesh(DomainSpec::disk(1.0, h));
            let sol = solve_linear_robin(alpha, target, &m).unwrap();
            boundary_frame(&sol.mode, alpha, &ScalarFn::Linear(sol.eigenvalue))
                .unwrap()
                .residual_norms()
        })
        .collect()
}

fn robin_frame() -> Outcome {
    // Re z³ and Im z³ solve −Δφ = 0, ∂_νφ = 3φ on the unit disk
    let norms = frame_norms(-3.0, 0.0);
    let names = ["robin", "metric", "expansion"];
    let mut pass = true;
    let mut lines = Vec::new();
    for j in 0..3 {
        let r = [norms[1][j] / norms[0][j], norms[2][j] / norms[1][j]];
        pass &= r.iter().all(|&x| x <= 0.65);
        lines.push(format!(
            "residual_{}: {:.3e} {:.3e} {:.3e}, ratios {:.3} {:.3}",
            names[j], norms[0][j], norms[1][j], norms[2][j], r[0], r[1]
        ));
    }
    let diag = frame_norms(1.0, 5.8);
    lines.push(format!(
        "diagnostic, α = 1 mode near λ = 5.8 (not asserted): expansion {:.3e} {:.3e} {:.3e}",
        diag[0][2], diag[1][2], diag[2][2]
    ));
    Outcome::new(
        pass,
        "Robin boundary frame, α = −3 eigenfunction on the disk: all residuals shrink by ≤ 0.65 per halving",
    )
    .detail(lines)
}

fn certificate_sweep() -> Outcome {
    let m = mesh(DomainSpec::disk(1.0, 0.04));
    let mut fired = 0;
    let mut unsound = 0;
    let mut total = 0;
    for alpha in [-1.5, -0.9, -0.5, -0.2, 0.0, 0.5, 1.0, 2.0] {
        let (a, mm) = robin_matrices(&m, alpha).unwrap();
        let sol = smallest_eigenpairs(&a, &mm, 6, &EigenOptions::default()).unwrap();
        for pair in &sol.pairs {
            total += 1;
            let u = Field::new(m.clone(), pair.vector.clone()).unwrap();
            let f = ScalarFn::Linear(pair.value);
            let cert = robin_certificate(&u, alpha, &f);
            if cert.fires {
                fired += 1;
                let p = NonlinearProblem::new(CoefficientFamily::laplacian(), f, ScalarFn::Linear(alpha));
                if classify(&p, &u, None).unwrap().classification != Classification::Unstable {
                    unsound += 1;
                }
            }
        }
    }
    let status = if fired == 0 {
        "sweep vacuous: no configuration fired".to_string()
    } else {
        format!("{fired} of {total} fired")
    };
    Outcome::new(
        unsound == 0,
        format!("Robin certificate soundness: {status}, {unsound} fired but not unstable"),
    )
}

fn liouville_exact(x: f64, y: f64) -> f64 {
    8f64.ln() - 2.0 * (1.0 + x * x + y * y).ln()
}

fn solver_checks() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    // Δu + e^u = 0 with ∂_νu + 2 + (u − ln 2) = 0; the u-dependent flux
    // removes the Möbius family of constant-flux solutions
    let p = NonlinearProblem::new(
        CoefficientFamily::laplacian(),
        ScalarFn::Exponential {
            amplitude: 1.0,
            rate: 1.0,
        },
        ScalarFn::Polynomial(vec![2.0 - 2f64.ln(), 1.0]),
    );
    for &h in &LEVELS {
        let m = mesh(DomainSpec::disk(1.0, h));
        let guess = Field::from_fn(m.clone(), |x, y| 0.8 * liouville_exact(x, y) + 0.2 * x);
        let (u, rep) = solve(&p, &guess, &NewtonOptions::default()).unwrap();
        let hist = &rep.residual_history;
        // pairs whose successor is above the rounding floor, scaled by r_0
        let floor = 1e3 * f64::EPSILON * hist[0];
        let scaled: Vec<f64> = hist
            .windows(2)
            .filter(|w| w[1] > floor)
            .map(|w| w[1] * hist[0] / (w[0] * w[0]))
            .collect();
        let last: Vec<f64> = scaled.iter().rev().take(2).copied().collect();
        let err = u
            .values()
            .iter()
            .zip(m.nodes())
            .map(|(v, x)| (v - liouville_exact(x[0], x[1])).abs())
            .fold(0.0, f64::max);
        pass &= rep.converged && last.len() == 2 && last.iter().all(|&r| r <= 10.0);
        lines.push(format!(
            "h = {h}: {} iterations, last scaled ratios r_(k+1)·r_0/r_k² {:?}, nodal error vs exact {err:.3e}",
            rep.iterations,
            last.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ));
    }
    let m = mesh(DomainSpec::disk(1.0, 0.04));
    let pn = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
    let opts = NewtonOptions {
        residual_tolerance: 1e-12,
        ..NewtonOptions::default()
    };
    let mut worst = 0.0f64;
    for seed in standard_cosine_seeds(&m).iter().take(4) {
        let (u, rep) = solve(&pn, seed, &opts).unwrap();
        if !rep.converged {
            continue;
        }
        let integral = integrate_source(&pn.f, &u);
        let sum: f64 = assemble_residual(&pn, &u).unwrap().iter().sum();
        pass &= (integral + sum).abs() <= 1e-12;
        worst = worst.max(integral.abs() / m.area());
    }
    pass &= worst <= 1e-8;
    lines.push(format!("Neumann conservation: max |∫f(u)|/|Ω| = {worst:.3e}"));
    Outcome::new(
        pass,
        "solver: quadratic convergence on the manufactured Liouville problem, Neumann conservation ≤ 1e-8·|Ω|",
    )
    .detail(lines)
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("operator spectrum", operator_spectrum),
        ("curvature identity", curvature_identity),
        ("constant stability", constant_stability),
        ("Neumann spectrum", neumann_spectrum),
        ("Poincaré inequality", poincare_inequality),
        ("rigidity", rigidity),
        ("dumbbell", dumbbell),
        ("conormal sign", convex_lemma),
        ("Robin frame", robin_frame),
        ("certificate soundness", certificate_sweep),
        ("solver", solver_checks),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|_| Outcome::new(false, format!("{name}: panicked")));
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {:>2}. {} ({:.1}s)",
            k + 1,
            out.summary,
            start.elapsed().as_secs_f64()
        );
        for line in &out.details {
            println!("         {line}");
        }
        if !out.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
