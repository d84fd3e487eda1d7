//! The five scenario pipelines. Each one fills a [`Report`] and writes its
//! tables through [`Artifacts`]; assertions are recorded, never panicked on.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablab_core::certify::{boundary_frame, rigidity_experiment, robin_certificate, RigidityOptions};
use stablab_core::coeff::CoefficientFamily;
use stablab_core::eigen::{smallest_eigenpairs, EigenOptions};
use stablab_core::fem::{assemble_residual, integrate_source, recover_derivatives, Field, NonlinearProblem, ScalarFn};
use stablab_core::levelset::random_smooth_tests;
use stablab_core::levelset::{curvature_identity_residual, levelset_quantities, levelset_table, poincare_breakdown};
use stablab_core::mesh::{generate, DomainKind, Mesh};
use stablab_core::solver::{blended_seed, robin_matrices, solve, standard_cosine_seeds, NewtonOptions};
use stablab_core::stability::{classify, Classification};

use crate::artifacts::{emit_plot_data, Artifacts, PlotData};
use crate::config::{Scenario, ScenarioConfig, SeedSpec};

/// A pipeline failure, tagged with the stage that raised it.
#[derive(Debug)]
pub struct RunError {
    pub stage: String,
    pub message: String,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

trait Stage<V> {
    fn at(self, stage: impl Into<String>) -> Result<V, RunError>;
}

impl<V, E: fmt::Display> Stage<V> for Result<V, E> {
    fn at(self, stage: impl Into<String>) -> Result<V, RunError> {
        self.map_err(|e| RunError {
            stage: stage.into(),
            message: e.to_string(),
        })
    }
}

#[derive(Default)]
pub struct Report {
    results: Vec<(String, String)>,
    asserts: Vec<(String, bool, String)>,
}

impl Report {
    fn set(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.results.push((key.into(), value.to_string()));
    }

    fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.asserts.push((name.to_string(), pass, detail.into()));
    }

    pub fn passed(&self) -> bool {
        self.asserts.iter().all(|a| a.1)
    }

    pub fn failures(&self) -> Vec<String> {
        self.asserts
            .iter()
            .filter(|a| !a.1)
            .map(|a| format!("{}: {}", a.0, a.2))
            .collect()
    }

    pub fn render(&self, cfg: &ScenarioConfig) -> String {
        let mut s = String::from("# stablab run report\n\n# configuration\n");
        for (k, v) in cfg.echo() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n# results\n");
        for (k, v) in &self.results {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n# assertions\n");
        for (name, pass, detail) in &self.asserts {
            let tag = if *pass { "pass" } else { "fail" };
            let _ = writeln!(s, "assert.{name} = {tag}: {detail}");
        }
        let _ = writeln!(s, "\nstatus = {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

struct Level {
    index: u32,
    h: f64,
    mesh: Arc<Mesh<f64>>,
}

fn levels(cfg: &ScenarioConfig) -> Result<Vec<Level>, RunError> {
    cfg.levels()
        .into_iter()
        .map(|k| {
            let spec = cfg.domain.refined(k);
            let mesh = generate(&spec).at(format!("mesh level {k}"))?;
            Ok(Level {
                index: k,
                h: spec.h,
                mesh: Arc::new(mesh),
            })
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn lumped_l2(mesh: &Mesh<f64>, v: &[f64]) -> f64 {
    mesh.lumped_mass()
        .iter()
        .zip(v)
        .map(|(w, x)| w * x * x)
        .sum::<f64>()
        .sqrt()
}

pub fn run(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<Report, RunError> {
    let mut report = Report::default();
    let lv = levels(cfg)?;
    for l in &lv {
        report.set(format!("level.{}.h", l.index), l.h);
        report.set(format!("level.{}.nodes", l.index), l.mesh.n_nodes());
        report.set(format!("level.{}.triangles", l.index), l.mesh.n_triangles());
    }
    match cfg.scenario {
        Scenario::NeumannRigidity => neumann_rigidity(cfg, &lv, out, &mut report)?,
        Scenario::Dumbbell => dumbbell(cfg, &lv, out, &mut report)?,
        Scenario::RobinCertificate => robin(cfg, &lv, out, &mut report)?,
        Scenario::IdentitySuite => identity(cfg, &lv, out, &mut report)?,
        Scenario::Manufactured => manufactured(cfg, &lv, out, &mut report)?,
    }
    Ok(report)
}

/// Starting guesses for one level, in descriptor order. Perturbations and
/// random seeds draw from the run seed mixed with the level index.
fn seeds(cfg: &ScenarioConfig, level: &Level) -> Vec<Field<f64>> {
    let m = &level.mesh;
    let stream = cfg.seed ^ (u64::from(level.index) << 56);
    let mut fields = Vec::new();
    for (j, s) in cfg.seeds.iter().enumerate() {
        match *s {
            SeedSpec::Cosine => fields.extend(standard_cosine_seeds(m)),
            SeedSpec::Blended(w) => fields.push(blended_seed(m, w)),
            SeedSpec::Constant(c) => fields.push(Field::constant(m.clone(), c)),
            SeedSpec::Radial(a) => {
                let r = m.nodes().iter().fold(0.0f64, |r, x| r.max(x[0].hypot(x[1])));
                fields.push(Field::from_fn(m.clone(), |x, y| a * (PI * x.hypot(y) / r).cos()));
            }
            SeedSpec::Random(n) => fields.extend(random_smooth_tests(m, n, stream.wrapping_add(j as u64 + 1))),
        }
    }
    if cfg.seed_perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        fields = fields
            .into_iter()
            .map(|f| {
                let vals = f
                    .values()
                    .iter()
                    .map(|v| v + cfg.seed_perturbation * rng.gen_range(-1.0..1.0))
                    .collect();
                f.with_values(vals).expect("same length")
            })
            .collect();
    }
    fields
}

fn neumann_problem(cfg: &ScenarioConfig) -> NonlinearProblem<f64> {
    NonlinearProblem::neumann(cfg.family.clone(), cfg.nonlinearity.clone())
}

fn neumann_rigidity(
    cfg: &ScenarioConfig,
    lv: &[Level],
    out: &mut Artifacts,
    report: &mut Report,
) -> Result<(), RunError> {
    let p = neumann_problem(cfg);
    let opts = RigidityOptions {
        newton: cfg.newton.clone(),
        ..RigidityOptions::default()
    };
    let mut violations = 0;
    let mut converged = 0;
    for l in lv {
        let k = l.index;
        let rep = rigidity_experiment(&p, &l.mesh, &seeds(cfg, l), &opts).at(format!("rigidity level {k}"))?;
        out.write(&format!("level{k}/rigidity.csv"), &rep.to_csv())
            .at("write")?;
        report.set(format!("level.{k}.convex"), rep.convex);
        report.set(format!("level.{k}.delta_const"), format!("{:e}", rep.delta_const));
        for r in &rep.rows {
            let class = match (r.classification, r.converged) {
                (Some(c), _) => format!(
                    "{c} (lambda_min {:.6e}, nonconstancy {:.3e})",
                    r.lambda_min, r.nonconstancy
                ),
                (None, true) => format!("unclassified: {}", r.note),
                (None, false) if r.note.is_empty() => "not converged".to_string(),
                (None, false) => format!("not converged: {}", r.note),
            };
            report.set(format!("level.{k}.seed.{}", r.seed), class);
            if r.converged {
                converged += 1;
                if let Some(u) = &r.solution {
                    emit_plot_data(
                        out,
                        PlotData::Field(u),
                        &format!("level{k}/solution_seed{}.dat", r.seed),
                    )
                    .at("write")?;
                }
            }
        }
        report.set(format!("level.{k}.violations"), rep.violations());
        violations += rep.violations();
    }
    report.check("converged", converged > 0, format!("{converged} seed solves converged"));
    report.check(
        "no_violations",
        violations == 0,
        format!("{violations} nonconstant stable solutions on convex meshes"),
    );
    Ok(())
}

// nonconstancy ‖u − mean‖∞ above which a solution counts as nonconstant
const NONCONSTANT: f64 = 1e-4;

fn dumbbell(cfg: &ScenarioConfig, lv: &[Level], out: &mut Artifacts, report: &mut Report) -> Result<(), RunError> {
    let p = neumann_problem(cfg);
    let finest = lv.last().expect("at least one level").index;
    let mut counterexample = None;
    for l in lv {
        let k = l.index;
        for (j, seed) in seeds(cfg, l).iter().enumerate() {
            let tag = format!("level{k}/seed{j}");
            let key = format!("level.{k}.seed.{j}");
            let (u, rep) = solve(&p, seed, &cfg.newton).at(format!("newton {tag}"))?;
            out.write(&format!("{tag}/newton.csv"), &rep.history_csv())
                .at("write")?;
            emit_plot_data(out, PlotData::Field(&u), &format!("{tag}/solution.dat")).at("write")?;
            report.set(format!("{key}.converged"), rep.converged);
            report.set(format!("{key}.iterations"), rep.iterations);
            report.set(format!("{key}.final_residual"), format!("{:.6e}", rep.final_residual));
            report.set(format!("{key}.nonconstancy"), format!("{:.6e}", u.oscillation()));
            if !rep.converged {
                continue;
            }
            let st = classify(&p, &u, None).at(format!("stability {tag}"))?;
            for (name, value) in st.to_kv().lines().filter_map(|l| l.split_once(" = ")) {
                report.set(format!("{key}.stability.{name}"), value);
            }
            emit_plot_data(out, PlotData::Stability(&st), &format!("{tag}/stability.dat")).at("write")?;
            emit_plot_data(
                out,
                PlotData::Field(&st.eigenfunction),
                &format!("{tag}/eigenfunction.dat"),
            )
            .at("write")?;
            if st.classification != Classification::Stable || u.oscillation() <= NONCONSTANT {
                continue;
            }
            // slack relative to the largest term; +inf when no tests are requested
            let ur = recover_derivatives(&u);
            let mut rows = Vec::new();
            for phi in random_smooth_tests(&l.mesh, cfg.poincare_tests, cfg.seed) {
                rows.push(poincare_breakdown(&p, &ur, &phi).at(format!("poincare {tag}"))?);
            }
            emit_plot_data(out, PlotData::Poincare(&rows), &format!("{tag}/poincare.dat")).at("write")?;
            let worst = rows
                .iter()
                .map(|b| {
                    if b.magnitude() > 0.0 {
                        b.slack / b.magnitude()
                    } else {
                        0.0
                    }
                })
                .fold(f64::INFINITY, f64::min);
            report.set(format!("{key}.poincare.min_relative_slack"), format!("{worst:.6e}"));
            if k == finest && counterexample.is_none() {
                counterexample = Some((j, worst));
            }
        }
    }
    let h = lv.last().unwrap().h;
    match counterexample {
        Some((j, c)) => {
            report.check(
                "nonconstant_stable",
                true,
                format!("seed {j} at h = {h} converged to a nonconstant stable solution"),
            );
            report.check(
                "poincare_slack",
                c >= -h,
                if c.is_finite() {
                    format!("min slack/scale = {c:.3e} against −h = {:.3e}", -h)
                } else {
                    "no test functions requested".to_string()
                },
            );
        }
        None => report.check(
            "nonconstant_stable",
            false,
            format!("no seed converged to a nonconstant stable solution at h = {h}"),
        ),
    }
    Ok(())
}

fn robin(cfg: &ScenarioConfig, lv: &[Level], out: &mut Artifacts, report: &mut Report) -> Result<(), RunError> {
    let alpha = cfg.robin_alpha.expect("validated");
    let mut fired = 0;
    let mut unsound = 0;
    let mut vacuous = 0;
    let mut total = 0;
    for l in lv {
        let k = l.index;
        let (a, m) = robin_matrices(&l.mesh, alpha).at(format!("assembly level {k}"))?;
        let modes = cfg.robin_modes.min(l.mesh.n_nodes());
        let sol = smallest_eigenpairs(&a, &m, modes, &EigenOptions::default()).at(format!("eigenmodes level {k}"))?;
        let mut csv = String::from(
            "mode,eigenvalue,boundary_integral,min_alpha_plus_kappa,status,lambda_min,classification,sound\n",
        );
        let mut norms = String::from("mode,residual_robin,residual_metric,residual_expansion\n");
        for (j, pair) in sol.pairs.iter().enumerate() {
            total += 1;
            let u = Field::new(l.mesh.clone(), pair.vector.clone()).at("eigenmode")?;
            let f = ScalarFn::Linear(pair.value);
            let cert = robin_certificate(&u, alpha, &f);
            let p = NonlinearProblem::new(CoefficientFamily::laplacian(), f.clone(), ScalarFn::Linear(alpha));
            let st = classify(&p, &u, None).at(format!("stability level {k} mode {j}"))?;
            let sound = !cert.fires || st.classification == Classification::Unstable;
            fired += usize::from(cert.fires);
            unsound += usize::from(!sound);
            vacuous += usize::from(cert.status().starts_with("vacuous"));
            let _ = writeln!(
                csv,
                "{j},{:.10e},{:.10e},{:.10e},{},{:.10e},{},{sound}",
                pair.value,
                cert.boundary_integral,
                cert.min_alpha_plus_kappa,
                cert.status(),
                st.lambda_min,
                st.classification
            );
            let frame = boundary_frame(&u, alpha, &f).at(format!("boundary frame level {k} mode {j}"))?;
            let [r0, r1, r2] = frame.residual_norms();
            let _ = writeln!(norms, "{j},{r0:.10e},{r1:.10e},{r2:.10e}");
            emit_plot_data(
                out,
                PlotData::Table(&frame.to_table()),
                &format!("level{k}/frame_mode{j}.dat"),
            )
            .at("write")?;
            emit_plot_data(out, PlotData::Field(&u), &format!("level{k}/mode{j}.dat")).at("write")?;
            report.set(format!("level.{k}.mode.{j}.eigenvalue"), format!("{:.10e}", pair.value));
            report.set(format!("level.{k}.mode.{j}.certificate"), cert.status());
        }
        out.write(&format!("level{k}/certificate.csv"), &csv).at("write")?;
        out.write(&format!("level{k}/frame_norms.csv"), &norms).at("write")?;
    }
    let status = if vacuous == total {
        "vacuous (integral = 0)".to_string()
    } else if fired == 0 {
        "vacuous at tested parameters".to_string()
    } else {
        format!("{fired} of {total} fired")
    };
    report.set("certificate.status", &status);
    report.check(
        "certificate_sound",
        unsound == 0,
        format!("{status}; {unsound} fired on a solution that is not unstable"),
    );
    Ok(())
}

// consecutive ratio bound for the identity residual under halving of h
const IDENTITY_RATIO: f64 = 0.65;

fn identity(cfg: &ScenarioConfig, lv: &[Level], out: &mut Artifacts, report: &mut Report) -> Result<(), RunError> {
    let field = cfg.identity_field;
    let mut csv = String::from("level,h,nodes,max_residual,l2_residual,masked\n");
    let mut maxes = Vec::new();
    for l in lv {
        let k = l.index;
        let u = recover_derivatives(&Field::from_fn(l.mesh.clone(), |x, y| field.eval(x, y)));
        let data = levelset_quantities(&u);
        let res = curvature_identity_residual(&u);
        emit_plot_data(
            out,
            PlotData::Table(&levelset_table(&data, &res)),
            &format!("level{k}/levelset.dat"),
        )
        .at("write")?;
        let (mx, l2) = (max_abs(&res), lumped_l2(&l.mesh, &res));
        let _ = writeln!(
            csv,
            "{k},{},{},{mx:.10e},{l2:.10e},{}",
            l.h,
            l.mesh.n_nodes(),
            data.masked_count()
        );
        report.set(format!("level.{k}.max_residual"), format!("{mx:.6e}"));
        report.set(format!("level.{k}.l2_residual"), format!("{l2:.6e}"));
        maxes.push(mx);
    }
    out.write("residuals.csv", &csv).at("write")?;
    if maxes.len() < 2 {
        report.check("residual_decay", true, "single level, no ratio to check");
        return Ok(());
    }
    let ratios: Vec<f64> = maxes.windows(2).map(|w| w[1] / w[0]).collect();
    let text: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    report.check(
        "residual_decay",
        ratios.iter().all(|&r| r <= IDENTITY_RATIO),
        format!("max-residual ratios {} (bound {IDENTITY_RATIO})", text.join(" ")),
    );
    Ok(())
}

// Liouville: u = ln 8 − 2 ln(1 + r²) solves Δu + eᵘ = 0; its outward flux
// on r = R is −4R/(1 + R²)
fn liouville(x: f64, y: f64) -> f64 {
    8f64.ln() - 2.0 * (1.0 + x * x + y * y).ln()
}

const ERROR_RATIO: f64 = 0.35;
const QUADRATIC_BOUND: f64 = 10.0;

fn manufactured(cfg: &ScenarioConfig, lv: &[Level], out: &mut Artifacts, report: &mut Report) -> Result<(), RunError> {
    let DomainKind::Disk { radius } = cfg.domain.kind else {
        unreachable!("validated as a disk");
    };
    let (r2, u_r) = (radius * radius, liouville(radius, 0.0));
    // the u-dependent flux pins the solution; a constant flux leaves a
    // one-parameter family and a singular Jacobian
    let p = NonlinearProblem::new(
        CoefficientFamily::laplacian(),
        ScalarFn::Exponential {
            amplitude: 1.0,
            rate: 1.0,
        },
        ScalarFn::Polynomial(vec![4.0 * radius / (1.0 + r2) - u_r, 1.0]),
    );
    let mut csv = String::from("level,h,nodes,iterations,max_error,l2_error\n");
    let mut errors = Vec::new();
    let mut quadratic = true;
    let mut all_converged = true;
    for l in lv {
        let k = l.index;
        let guess = Field::from_fn(l.mesh.clone(), |x, y| 0.8 * liouville(x, y) + 0.2 * x);
        let (u, rep) = solve(&p, &guess, &cfg.newton).at(format!("newton level {k}"))?;
        out.write(&format!("level{k}/newton.csv"), &rep.history_csv())
            .at("write")?;
        emit_plot_data(out, PlotData::Field(&u), &format!("level{k}/solution.dat")).at("write")?;
        let err: Vec<f64> = u
            .values()
            .iter()
            .zip(l.mesh.nodes())
            .map(|(v, x)| v - liouville(x[0], x[1]))
            .collect();
        let ef = u.with_values(err.clone()).at("error field")?;
        emit_plot_data(out, PlotData::Field(&ef), &format!("level{k}/error.dat")).at("write")?;
        let (mx, l2) = (max_abs(&err), lumped_l2(&l.mesh, &err));
        let _ = writeln!(
            csv,
            "{k},{},{},{},{mx:.10e},{l2:.10e}",
            l.h,
            l.mesh.n_nodes(),
            rep.iterations
        );
        let hist = &rep.residual_history;
        let floor = 1e3 * f64::EPSILON * hist[0];
        let scaled: Vec<f64> = hist
            .windows(2)
            .filter(|w| w[1] > floor)
            .map(|w| w[1] * hist[0] / (w[0] * w[0]))
            .collect();
        let last: Vec<f64> = scaled.iter().rev().take(2).copied().collect();
        quadratic &= last.len() == 2 && last.iter().all(|&r| r <= QUADRATIC_BOUND);
        all_converged &= rep.converged;
        let text: Vec<String> = last.iter().map(|r| format!("{r:.3}")).collect();
        report.set(format!("level.{k}.converged"), rep.converged);
        report.set(format!("level.{k}.iterations"), rep.iterations);
        report.set(format!("level.{k}.scaled_ratios"), text.join(" "));
        report.set(format!("level.{k}.max_error"), format!("{mx:.6e}"));
        errors.push(mx);
    }
    out.write("errors.csv", &csv).at("write")?;
    report.check("converged", all_converged, "Newton converged on every level");
    report.check(
        "quadratic",
        quadratic,
        format!("last two scaled ratios r_(k+1)·r_0/r_k² ≤ {QUADRATIC_BOUND} on every level"),
    );
    if errors.len() >= 2 {
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
        let text: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
        report.check(
            "error_decay",
            ratios.iter().all(|&r| r <= ERROR_RATIO),
            format!("max-error ratios {} (bound {ERROR_RATIO})", text.join(" ")),
        );
    }

    // a Neumann solve conserves ∫f(u) = 0 to the solver tolerance
    let l = &lv[0];
    let pn = NonlinearProblem::neumann(CoefficientFamily::laplacian(), ScalarFn::bistable());
    let opts = NewtonOptions {
        residual_tolerance: 1e-12,
        ..cfg.newton.clone()
    };
    let seed = &standard_cosine_seeds(&l.mesh)[0];
    let (u, rep) = solve(&pn, seed, &opts).at("newton conservation check")?;
    let integral = integrate_source(&pn.f, &u);
    let sum: f64 = assemble_residual(&pn, &u).at("conservation residual")?.iter().sum();
    let scaled = integral.abs() / l.mesh.area();
    report.set("conservation.integral_over_area", format!("{scaled:.3e}"));
    report.check(
        "conservation",
        rep.converged && scaled <= 1e-8 && (integral + sum).abs() <= 1e-12,
        format!("|∫f(u)|/|Ω| = {scaled:.3e} (bound 1e-8), converged {}", rep.converged),
    );
    Ok(())
}
