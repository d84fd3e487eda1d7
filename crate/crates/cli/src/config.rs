//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; dotted keys group the
//! parameters of one setting (`domain.h`, `family.p`, `newton.tolerance`).
//! Every key that a scenario does not use is rejected, with its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use stablab_core::coeff::CoefficientFamily;
use stablab_core::fem::ScalarFn;
use stablab_core::mesh::DomainSpec;
use stablab_core::solver::NewtonOptions;

#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    NeumannRigidity,
    Dumbbell,
    RobinCertificate,
    IdentitySuite,
    Manufactured,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::NeumannRigidity,
        Scenario::Dumbbell,
        Scenario::RobinCertificate,
        Scenario::IdentitySuite,
        Scenario::Manufactured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NeumannRigidity => "neumann-rigidity",
            Scenario::Dumbbell => "dumbbell",
            Scenario::RobinCertificate => "robin-certificate",
            Scenario::IdentitySuite => "identity-suite",
            Scenario::Manufactured => "manufactured",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn default_domain(self) -> &'static str {
        match self {
            Scenario::Dumbbell => "dumbbell",
            _ => "disk",
        }
    }

    fn default_h(self) -> f64 {
        match self {
            Scenario::Dumbbell => 0.04,
            Scenario::IdentitySuite => 0.1,
            _ => 0.08,
        }
    }

    fn default_levels(self) -> u32 {
        match self {
            Scenario::NeumannRigidity => 1,
            Scenario::Dumbbell => 2,
            _ => 3,
        }
    }

    fn default_seeds(self) -> &'static str {
        match self {
            Scenario::Dumbbell => "blended:0.5",
            _ => "cosine",
        }
    }

    fn uses_nonlinearity(self) -> bool {
        matches!(self, Scenario::NeumannRigidity | Scenario::Dumbbell)
    }

    fn uses_seeds(self) -> bool {
        matches!(self, Scenario::NeumannRigidity | Scenario::Dumbbell)
    }

    fn uses_family(self) -> bool {
        matches!(self, Scenario::NeumannRigidity | Scenario::Dumbbell)
    }
}

/// Starting guess for Newton, written `name[:parameter]`.
#[derive(Clone, Debug, PartialEq)]
pub enum SeedSpec {
    /// The ten standard cosine seeds.
    Cosine,
    /// `±1` halves joined over the given width.
    Blended(f64),
    Constant(f64),
    /// `A cos(π r / R)` with `R` the largest node radius.
    Radial(f64),
    /// Random smooth fields drawn from the run seed.
    Random(usize),
}

impl SeedSpec {
    fn parse(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |default: f64| -> Result<f64, String> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| format!("seed `{s}`: `{a}` is not a number"))
            })
        };
        match name {
            "cosine" if arg.is_none() => Ok(SeedSpec::Cosine),
            "blended" => Ok(SeedSpec::Blended(num(0.5)?)),
            "constant" => Ok(SeedSpec::Constant(num(1.0)?)),
            "radial" => Ok(SeedSpec::Radial(num(0.9)?)),
            "random" => {
                let n = num(5.0)?;
                if n < 1.0 || n.fract() != 0.0 {
                    return Err(format!("seed `{s}`: count must be a positive integer"));
                }
                Ok(SeedSpec::Random(n as usize))
            }
            _ => Err(format!(
                "unknown seed `{s}` (expected cosine, blended[:w], constant[:c], radial[:A], random[:n])"
            )),
        }
    }

    fn describe(&self) -> String {
        match self {
            SeedSpec::Cosine => "cosine".into(),
            SeedSpec::Blended(w) => format!("blended:{w}"),
            SeedSpec::Constant(c) => format!("constant:{c}"),
            SeedSpec::Radial(a) => format!("radial:{a}"),
            SeedSpec::Random(n) => format!("random:{n}"),
        }
    }
}

/// Scalar field catalogue for the identity suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdentityField {
    SinCosh,
    Paraboloid,
    Saddle,
}

impl IdentityField {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "sin-cosh" => Some(IdentityField::SinCosh),
            "paraboloid" => Some(IdentityField::Paraboloid),
            "saddle" => Some(IdentityField::Saddle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IdentityField::SinCosh => "sin-cosh",
            IdentityField::Paraboloid => "paraboloid",
            IdentityField::Saddle => "saddle",
        }
    }

    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            IdentityField::SinCosh => x.sin() * y.cosh(),
            IdentityField::Paraboloid => 0.5 * (x * x + y * y),
            IdentityField::Saddle => x * y,
        }
    }
}

/// Fully resolved configuration: every value set, defaults included.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub domain: DomainSpec,
    pub family: CoefficientFamily<f64>,
    pub nonlinearity: ScalarFn<f64>,
    pub robin_alpha: Option<f64>,
    pub mesh_levels: u32,
    /// Run only this refinement level.
    pub only_level: Option<u32>,
    pub seeds: Vec<SeedSpec>,
    pub seed_perturbation: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub newton: NewtonOptions<f64>,
    pub poincare_tests: usize,
    pub robin_modes: usize,
    pub identity_field: IdentityField,
    echo: BTreeMap<String, String>,
}

impl ScenarioConfig {
    /// Refinement levels that this run computes.
    pub fn levels(&self) -> Vec<u32> {
        match self.only_level {
            Some(k) => vec![k],
            None => (0..self.mesh_levels).collect(),
        }
    }

    /// Resolved configuration as sorted `key = value` lines.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.echo
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.echo.insert("seed".into(), seed.to_string());
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        self.echo.insert("output_dir".into(), dir.display().to_string());
        self.output_dir = dir;
    }

    pub fn set_only_level(&mut self, level: u32) {
        self.only_level = Some(level);
        self.echo.insert("mesh_level".into(), level.to_string());
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Raw {
    path: PathBuf,
    entries: BTreeMap<String, Entry>,
}

impl Raw {
    fn err(&self, line: Option<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn parsed<V: std::str::FromStr>(&mut self, key: &str, default: V) -> Result<V, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse()
                .map_err(|_| self.err(Some(line), format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn parsed_opt<V: std::str::FromStr>(&mut self, key: &str) -> Result<Option<V>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(Some(line), format!("`{key}`: cannot parse `{v}`"))),
        }
    }
}

fn parse_lines(path: &Path, text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw {
        path: path.to_path_buf(),
        entries: BTreeMap::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| raw.err(Some(ln), format!("expected `key = value`, got `{content}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(raw.err(Some(ln), "empty key"));
        }
        if let Some(prev) = raw.line_of(k) {
            return Err(raw.err(Some(ln), format!("`{k}` already set on line {prev}")));
        }
        raw.entries.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line: ln,
                used: false,
            },
        );
    }
    Ok(raw)
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: format!("cannot read configuration: {e}"),
    })?;
    parse(path, &text)
}

pub fn parse(path: &Path, text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut raw = parse_lines(path, text)?;
    let mut echo = BTreeMap::new();

    let (name, line) = raw
        .take("scenario")
        .ok_or_else(|| raw.err(None, "missing required key `scenario`"))?;
    let scenario = Scenario::parse(&name).ok_or_else(|| {
        let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        raw.err(
            Some(line),
            format!("unknown scenario `{name}` (expected one of {})", names.join(", ")),
        )
    })?;
    echo.insert("scenario".to_string(), scenario.name().to_string());

    let domain = resolve_domain(&mut raw, scenario, &mut echo)?;
    let family = resolve_family(&mut raw, scenario, &mut echo)?;
    let nonlinearity = resolve_nonlinearity(&mut raw, scenario, &mut echo)?;

    let robin_line = raw.line_of("robin_alpha");
    let robin_alpha: Option<f64> = raw.parsed_opt("robin_alpha")?;
    match (scenario, robin_alpha) {
        (Scenario::RobinCertificate, None) => {
            return Err(raw.err(None, "scenario robin-certificate requires `robin_alpha`"));
        }
        (Scenario::RobinCertificate, Some(a)) => {
            if !a.is_finite() {
                return Err(raw.err(robin_line, "`robin_alpha` must be finite"));
            }
            echo.insert("robin_alpha".into(), a.to_string());
        }
        (_, Some(_)) => {
            return Err(raw.err(
                robin_line,
                format!("`robin_alpha` is not used by scenario {}", scenario.name()),
            ));
        }
        _ => {}
    }

    let levels_line = raw.line_of("mesh_levels");
    let mesh_levels: u32 = raw.parsed("mesh_levels", scenario.default_levels())?;
    if !(1..=6).contains(&mesh_levels) {
        return Err(raw.err(levels_line, "`mesh_levels` must be between 1 and 6"));
    }
    echo.insert("mesh_levels".into(), mesh_levels.to_string());

    let mut seeds = Vec::new();
    let mut seed_perturbation: f64 = 0.0;
    if scenario.uses_seeds() {
        let (text, line) = raw
            .take("seeds")
            .unwrap_or_else(|| (scenario.default_seeds().to_string(), 0));
        for item in text.split(',').filter(|s| !s.trim().is_empty()) {
            seeds.push(SeedSpec::parse(item).map_err(|m| raw.err((line > 0).then_some(line), m))?);
        }
        if seeds.is_empty() {
            return Err(raw.err(Some(line), "`seeds` lists no seed"));
        }
        let pl = raw.line_of("seeds.perturbation");
        seed_perturbation = raw.parsed("seeds.perturbation", 0.0)?;
        if !(seed_perturbation >= 0.0 && seed_perturbation.is_finite()) {
            return Err(raw.err(pl, "`seeds.perturbation` must be a nonnegative number"));
        }
        let list: Vec<String> = seeds.iter().map(SeedSpec::describe).collect();
        echo.insert("seeds".into(), list.join(", "));
        echo.insert("seeds.perturbation".into(), seed_perturbation.to_string());
    }

    let seed: u64 = raw.parsed("seed", 0)?;
    echo.insert("seed".into(), seed.to_string());

    let output_dir: PathBuf = raw
        .take("output_dir")
        .map(|(v, _)| PathBuf::from(v))
        .unwrap_or_else(|| PathBuf::from(format!("stablab-{}", scenario.name())));
    echo.insert("output_dir".into(), output_dir.display().to_string());

    let defaults = NewtonOptions::<f64>::default();
    let newton = NewtonOptions {
        max_iterations: raw.parsed("newton.max_iterations", defaults.max_iterations)?,
        residual_tolerance: raw.parsed("newton.tolerance", defaults.residual_tolerance)?,
        damping: raw.parsed("newton.damping", defaults.damping)?,
        max_halvings: raw.parsed("newton.max_halvings", defaults.max_halvings)?,
        continuation_steps: raw.parsed("newton.continuation_steps", defaults.continuation_steps)?,
    };
    if let Err(e) = newton.validate() {
        return Err(raw.err(None, format!("newton options: {e}")));
    }
    echo.insert("newton.max_iterations".into(), newton.max_iterations.to_string());
    echo.insert("newton.tolerance".into(), format!("{:e}", newton.residual_tolerance));
    echo.insert("newton.damping".into(), newton.damping.to_string());
    echo.insert("newton.max_halvings".into(), newton.max_halvings.to_string());
    echo.insert(
        "newton.continuation_steps".into(),
        newton.continuation_steps.to_string(),
    );

    let mut poincare_tests = 0;
    if scenario == Scenario::Dumbbell {
        poincare_tests = raw.parsed("poincare.tests", 20usize)?;
        echo.insert("poincare.tests".into(), poincare_tests.to_string());
    }
    let mut robin_modes = 0;
    if scenario == Scenario::RobinCertificate {
        let ml = raw.line_of("robin.modes");
        robin_modes = raw.parsed("robin.modes", 6usize)?;
        if robin_modes == 0 {
            return Err(raw.err(ml, "`robin.modes` must be at least 1"));
        }
        echo.insert("robin.modes".into(), robin_modes.to_string());
    }
    let mut identity_field = IdentityField::SinCosh;
    if scenario == Scenario::IdentitySuite {
        if let Some((v, line)) = raw.take("identity.field") {
            identity_field = IdentityField::parse(&v).ok_or_else(|| {
                raw.err(
                    Some(line),
                    format!("unknown identity field `{v}` (expected sin-cosh, paraboloid, saddle)"),
                )
            })?;
        }
        echo.insert("identity.field".into(), identity_field.name().into());
    }

    if let Some((k, e)) = raw.entries.iter().find(|(_, e)| !e.used) {
        return Err(raw.err(
            Some(e.line),
            format!("key `{k}` is unknown or not used by scenario {}", scenario.name()),
        ));
    }

    Ok(ScenarioConfig {
        scenario,
        domain,
        family,
        nonlinearity,
        robin_alpha,
        mesh_levels,
        only_level: None,
        seeds,
        seed_perturbation,
        seed,
        output_dir,
        newton,
        poincare_tests,
        robin_modes,
        identity_field,
        echo,
    })
}

fn resolve_domain(
    raw: &mut Raw,
    scenario: Scenario,
    echo: &mut BTreeMap<String, String>,
) -> Result<DomainSpec, ConfigError> {
    let (kind, kind_line) = raw
        .take("domain")
        .unwrap_or_else(|| (scenario.default_domain().to_string(), 0));
    let keys: Vec<String> = raw
        .entries
        .keys()
        .filter(|k| k.starts_with("domain."))
        .cloned()
        .collect();
    let mut values = BTreeMap::new();
    for k in &keys {
        let (v, _) = raw.take(k).expect("listed key");
        values.insert(k["domain.".len()..].to_string(), v);
    }
    if !values.contains_key("h") && kind != "file" {
        values.insert("h".into(), scenario.default_h().to_string());
    }
    let mut text = kind.clone();
    let params: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v}")).collect();
    if !params.is_empty() {
        text = format!("{kind}:{}", params.join(","));
    }
    let line = keys
        .iter()
        .filter_map(|k| raw.line_of(k))
        .min()
        .or((kind_line > 0).then_some(kind_line));
    let spec: DomainSpec = text.parse().map_err(|e| raw.err(line, format!("domain: {e}")))?;
    if scenario == Scenario::Manufactured && spec.kind_name() != "disk" {
        return Err(raw.err(
            line,
            "scenario manufactured needs a disk domain (its exact solution is radial)",
        ));
    }
    echo.insert("domain".into(), spec.kind_name().into());
    for (k, v) in spec.parameters() {
        echo.insert(format!("domain.{k}"), v);
    }
    Ok(spec)
}

fn resolve_family(
    raw: &mut Raw,
    scenario: Scenario,
    echo: &mut BTreeMap<String, String>,
) -> Result<CoefficientFamily<f64>, ConfigError> {
    if !scenario.uses_family() {
        if let Some(line) = raw.line_of("family") {
            let v = raw.take("family").expect("present").0;
            if v != "laplacian" {
                return Err(raw.err(
                    Some(line),
                    format!("scenario {} is defined for the Laplacian only", scenario.name()),
                ));
            }
        }
        echo.insert("family".into(), "laplacian".into());
        return Ok(CoefficientFamily::laplacian());
    }
    let (name, line) = raw.take("family").unwrap_or_else(|| ("laplacian".into(), 0));
    let line = (line > 0).then_some(line);
    let fam = match name.as_str() {
        "laplacian" => CoefficientFamily::laplacian(),
        "mean-curvature" => CoefficientFamily::mean_curvature(),
        "p-laplacian" => {
            let pl = raw.line_of("family.p").or(line);
            let p: f64 = raw.parsed("family.p", 3.0)?;
            echo.insert("family.p".into(), p.to_string());
            CoefficientFamily::p_laplacian(p).map_err(|e| raw.err(pl, format!("family: {e}")))?
        }
        other => {
            return Err(raw.err(
                line,
                format!("unknown family `{other}` (expected laplacian, p-laplacian, mean-curvature)"),
            ))
        }
    };
    echo.insert("family".into(), name);
    Ok(fam)
}

fn resolve_nonlinearity(
    raw: &mut Raw,
    scenario: Scenario,
    echo: &mut BTreeMap<String, String>,
) -> Result<ScalarFn<f64>, ConfigError> {
    if !scenario.uses_nonlinearity() {
        if let Some(line) = raw.line_of("nonlinearity") {
            return Err(raw.err(
                Some(line),
                format!("scenario {} fixes its own nonlinearity", scenario.name()),
            ));
        }
        return Ok(ScalarFn::Zero);
    }
    let (name, line) = raw.take("nonlinearity").unwrap_or_else(|| ("bistable".into(), 0));
    let line = (line > 0).then_some(line);
    let f = match name.as_str() {
        "zero" => ScalarFn::Zero,
        "linear" => {
            let l: f64 = raw.parsed("nonlinearity.lambda", 1.0)?;
            echo.insert("nonlinearity.lambda".into(), l.to_string());
            ScalarFn::Linear(l)
        }
        "bistable" => {
            let s: f64 = raw.parsed("nonlinearity.strength", 1.0)?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(raw.err(
                    raw.line_of("nonlinearity.strength"),
                    "bistable strength must be positive",
                ));
            }
            echo.insert("nonlinearity.strength".into(), s.to_string());
            ScalarFn::Bistable { strength: s }
        }
        "polynomial" => {
            let (text, cl) = raw
                .take("nonlinearity.coefficients")
                .ok_or_else(|| raw.err(line, "polynomial nonlinearity needs `nonlinearity.coefficients`"))?;
            let coeffs: Result<Vec<f64>, _> = text.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let coeffs = coeffs
                .ok()
                .filter(|c| !c.is_empty() && c.iter().all(|x| x.is_finite()))
                .ok_or_else(|| raw.err(Some(cl), format!("`nonlinearity.coefficients`: cannot parse `{text}`")))?;
            let list: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
            echo.insert("nonlinearity.coefficients".into(), list.join(", "));
            ScalarFn::Polynomial(coeffs)
        }
        other => {
            return Err(raw.err(
                line,
                format!("unknown nonlinearity `{other}` (expected zero, linear, bistable, polynomial)"),
            ))
        }
    };
    echo.insert("nonlinearity".into(), name);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
        parse(Path::new("test.conf"), text)
    }

    #[test]
    fn defaults_are_echoed() {
        let c = parse_str("scenario = neumann-rigidity\n").unwrap();
        let e = c.echo();
        assert_eq!(e["domain"], "disk");
        assert_eq!(e["domain.h"], "0.08");
        assert_eq!(e["nonlinearity"], "bistable");
        assert_eq!(e["seeds"], "cosine");
        assert_eq!(e["newton.max_iterations"], "50");
        assert_eq!(c.levels(), vec![0]);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_str("scenario = dumbbell\n\nfamily = cubic\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse_str("scenario = dumbbell\nfoo = 1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("foo"));
        let e = parse_str("scenario = robin-certificate\n").unwrap_err();
        assert!(e.message.contains("robin_alpha"));
        let e = parse_str("scenario = swim\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = parse_str("scenario = dumbbell\nseed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn dotted_keys_and_comments() {
        let text = "# rigidity\nscenario = neumann-rigidity  # trailing\ndomain = ellipse\ndomain.a = 2\n\
                    domain.h = 0.1\nnonlinearity = polynomial\nnonlinearity.coefficients = 0, 1, 0, -1\n\
                    seeds = blended:0.3, random:2\n";
        let c = parse_str(text).unwrap();
        assert_eq!(c.echo()["domain.a"], "2");
        assert_eq!(c.echo()["domain.b"], "1");
        assert_eq!(c.seeds, vec![SeedSpec::Blended(0.3), SeedSpec::Random(2)]);
        assert_eq!(c.nonlinearity.value(2.0), 2.0 - 8.0);
    }

    #[test]
    fn scenario_specific_keys() {
        assert!(parse_str("scenario = identity-suite\nnonlinearity = bistable\n").is_err());
        assert!(parse_str("scenario = manufactured\ndomain = rectangle\n").is_err());
        assert!(parse_str("scenario = dumbbell\nrobin_alpha = 1\n").is_err());
        let c = parse_str("scenario = robin-certificate\nrobin_alpha = 0\n").unwrap();
        assert_eq!(c.robin_alpha, Some(0.0));
        assert_eq!(c.levels(), vec![0, 1, 2]);
    }
}
