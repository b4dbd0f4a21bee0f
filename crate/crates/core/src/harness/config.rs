//! Flat experiment documents: `section.key = value` lines, `#` comments,
//! quoted strings, bracketed lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::aggregators::{
    AggregatorSpec, BucketingParams, CClipParams, DncParams, RfaParams, Rule, Wrapper,
};
use crate::attacks::{Attack, IpmParams, LieParams, MinOptParams, StrikeParams};
use crate::error::{Error, Result};
use crate::sim::{FederationSpec, ModelKind, PartitionSpec, SimulationConfig, SyntheticSpec, TrainSpec};

pub const DEFAULT_CLIENTS: usize = 20;
pub const DEFAULT_ROUNDS: usize = 100;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimulationConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::ConfigInvalid("seeds must not be empty".into()));
        }
        self.sim
            .validate()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    /// Raw numeric text, converted on use so integers stay exact.
    Num(String),
    Bool(bool),
    List(Vec<Value>),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Str(_) => "a string",
            Value::Num(_) => "a number",
            Value::Bool(_) => "a boolean",
            Value::List(_) => "a list",
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigSyntax {
        line,
        message: message.into(),
    }
}

/// Drops a trailing `#` comment that is not inside a string.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if quoted => escaped = true,
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_scalar(text: &str, line: usize) -> Result<Value> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = rest.chars();
        loop {
            match chars.next() {
                None => return Err(syntax(line, "unterminated string")),
                Some('"') => break,
                Some('\\') => match chars.next() {
                    Some(c @ ('"' | '\\')) => out.push(c),
                    _ => return Err(syntax(line, "only \\\" and \\\\ escapes are allowed")),
                },
                Some(c) => out.push(c),
            }
        }
        if !chars.as_str().trim().is_empty() {
            return Err(syntax(line, "unexpected text after string"));
        }
        return Ok(Value::Str(out));
    }
    match text {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        "" => return Err(syntax(line, "missing value")),
        _ => {}
    }
    let numeric_start = text.starts_with(|c: char| c.is_ascii_digit() || "+-.".contains(c));
    if numeric_start && text.parse::<f64>().is_ok_and(f64::is_finite) {
        Ok(Value::Num(text.to_string()))
    } else {
        Err(syntax(line, format!("cannot read `{text}`; strings must be quoted")))
    }
}

fn split_list(body: &str, line: usize) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut quoted = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, ch) in body.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if quoted => escaped = true,
            '"' => quoted = !quoted,
            '[' | ']' if !quoted => return Err(syntax(line, "nested lists are not supported")),
            ',' if !quoted => {
                parts.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = &body[start..];
    if !last.trim().is_empty() || !parts.is_empty() {
        parts.push(last);
    }
    Ok(parts)
}

fn parse_value(text: &str, line: usize) -> Result<Value> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix('[') {
        let body = rest
            .strip_suffix(']')
            .ok_or_else(|| syntax(line, "unterminated list"))?;
        return split_list(body, line)?
            .into_iter()
            .map(|item| parse_scalar(item, line))
            .collect::<Result<_>>()
            .map(Value::List);
    }
    parse_scalar(text, line)
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        })
}

/// The parsed key-value pairs; keys are consumed as they are interpreted.
struct Document {
    entries: BTreeMap<String, (usize, Value)>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(line, "expected `key = value`"))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(syntax(line, format!("malformed key `{key}`")));
            }
            let value = parse_value(value, line)?;
            if let Some((first, _)) = entries.insert(key.to_string(), (line, value)) {
                return Err(syntax(line, format!("`{key}` already set on line {first}")));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, Value)> {
        self.entries.remove(key)
    }

    fn wrong(line: usize, key: &str, wanted: &str, got: &Value) -> Error {
        Error::ConfigInvalid(format!(
            "line {line}: `{key}` must be {wanted}, found {}",
            got.kind()
        ))
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::Str(s))) => Ok(Some(s)),
            Some((line, v)) => Err(Self::wrong(line, key, "a quoted string", &v)),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::Bool(b))) => Ok(Some(b)),
            Some((line, v)) => Err(Self::wrong(line, key, "true or false", &v)),
        }
    }

    fn int_of(value: &Value, key: &str, line: usize) -> Result<u64> {
        match value {
            Value::Num(raw) => raw.parse::<u64>().map_err(|_| {
                Error::ConfigInvalid(format!(
                    "line {line}: `{key}` must be a nonnegative integer, found {raw}"
                ))
            }),
            v => Err(Self::wrong(line, key, "a nonnegative integer", v)),
        }
    }

    fn uint(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key)
            .map(|(line, v)| Self::int_of(&v, key, line))
            .transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.uint(key)?.map(|v| v as usize))
    }

    fn real(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, Value::Num(raw))) => {
                let x: f64 = raw.parse().expect("checked when parsed");
                if x.is_finite() {
                    Ok(Some(x))
                } else {
                    Err(Error::ConfigInvalid(format!("line {line}: `{key}` must be finite")))
                }
            }
            Some((line, v)) => Err(Self::wrong(line, key, "a number", &v)),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<(usize, Vec<Value>)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, Value::List(items))) => Ok(Some((line, items))),
            Some((line, v)) => Err(Self::wrong(line, key, "a bracketed list", &v)),
        }
    }

    fn uint_list(&mut self, key: &str) -> Result<Option<Vec<u64>>> {
        self.list(key)?
            .map(|(line, items)| items.iter().map(|v| Self::int_of(v, key, line)).collect())
            .transpose()
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => {
                let scope = key.split('.').next().unwrap_or_default();
                let hint = match scope {
                    "attack" | "defense" | "bucketing" if key.contains('.') => {
                        format!(" (not a parameter of the selected {scope})")
                    }
                    _ => String::new(),
                };
                Err(Error::ConfigInvalid(format!("line {line}: unknown key `{key}`{hint}")))
            }
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_rule(doc: &mut Document) -> Result<Rule> {
    let name = doc.string("defense")?.unwrap_or_else(|| "mean".into());
    let mut rule = Rule::from_name(&name).ok_or_else(|| {
        Error::ConfigInvalid(format!(
            "unknown defense `{name}`; expected one of {}",
            Rule::NAMES.join(", ")
        ))
    })?;
    match &mut rule {
        Rule::Rfa(p) => {
            set(&mut p.iterations, doc.usize("defense.iterations")?);
            set(&mut p.smoothing, doc.real("defense.smoothing")?);
        }
        Rule::CClip(p) => {
            set(&mut p.inner_iterations, doc.usize("defense.inner_iterations")?);
            set(&mut p.clip_radius, doc.real("defense.clip_radius")?);
            set(&mut p.warm_start, doc.boolean("defense.warm_start")?);
        }
        Rule::Dnc(p) => {
            set(&mut p.filter_fraction, doc.real("defense.filter_fraction")?);
            set(&mut p.outer_iterations, doc.usize("defense.outer_iterations")?);
            set(&mut p.subsample_dim, doc.usize("defense.subsample_dim")?);
            set(&mut p.seed, doc.uint("defense.seed")?);
        }
        _ => {}
    }
    Ok(rule)
}

fn parse_wrappers(doc: &mut Document) -> Result<Vec<Wrapper>> {
    let Some((line, items)) = doc.list("wrappers")? else {
        return Ok(Vec::new());
    };
    let mut wrappers = Vec::new();
    for item in items {
        let wrapper = match &item {
            Value::Str(s) if s == "nnm" => Wrapper::Nnm,
            Value::Str(s) if s == "bucketing" => {
                let mut p = BucketingParams::default();
                set(&mut p.bucket_size, doc.usize("bucketing.size")?);
                set(&mut p.seed, doc.uint("bucketing.seed")?);
                Wrapper::Bucketing(p)
            }
            other => {
                return Err(Error::ConfigInvalid(format!(
                    "line {line}: wrappers must be \"bucketing\" or \"nnm\", found {other:?}"
                )))
            }
        };
        wrappers.push(wrapper);
    }
    Ok(wrappers)
}

fn parse_attack(doc: &mut Document) -> Result<Attack> {
    let name = doc.string("attack")?.unwrap_or_else(|| "none".into());
    let mut attack = Attack::from_name(&name).ok_or_else(|| {
        Error::ConfigInvalid(format!(
            "unknown attack `{name}`; expected one of {}",
            Attack::NAMES.join(", ")
        ))
    })?;
    match &mut attack {
        Attack::Strike(p) => {
            set(&mut p.nu, doc.real("attack.nu")?);
            set(&mut p.bisect_tolerance, doc.real("attack.bisect_tolerance")?);
            set(&mut p.bisect_max_iters, doc.usize("attack.bisect_max_iters")?);
        }
        Attack::Lie(p) => set(&mut p.z, doc.real("attack.z")?),
        Attack::Ipm(p) => set(&mut p.epsilon, doc.real("attack.epsilon")?),
        Attack::MinMax(p) | Attack::MinSum(p) => {
            set(&mut p.gamma_init, doc.real("attack.gamma_init")?);
            set(&mut p.tau, doc.real("attack.tau")?);
        }
        _ => {}
    }
    Ok(attack)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut doc = Document::parse(text)?;

    let n = doc.usize("federation.n")?.unwrap_or(DEFAULT_CLIENTS);
    let mut federation = FederationSpec::with_clients(n, DEFAULT_ROUNDS);
    set(&mut federation.f, doc.usize("federation.f")?);
    set(&mut federation.sampled_per_round, doc.usize("federation.sampled")?);
    set(&mut federation.rounds, doc.usize("federation.rounds")?);
    federation.byzantine_ids = doc
        .uint_list("federation.byzantine_ids")?
        .map(|ids| ids.into_iter().map(|i| i as usize).collect());

    let mut partition = PartitionSpec::default();
    set(&mut partition.beta, doc.real("partition.beta")?);
    set(&mut partition.iid, doc.boolean("partition.iid")?);
    partition.seed = doc.uint("partition.seed")?;

    let mut train = TrainSpec::default();
    let model = doc.string("train.model")?;
    let hidden = doc.usize("train.hidden")?;
    train.model = match (model.as_deref(), hidden) {
        (None | Some("softmax_linear"), None) => ModelKind::SoftmaxLinear,
        (None | Some("softmax_linear"), Some(_)) => {
            return Err(Error::ConfigInvalid(
                "train.hidden only applies to train.model = \"mlp\"".into(),
            ))
        }
        (Some("mlp"), h) => ModelKind::Mlp {
            hidden: h.unwrap_or(DEFAULT_HIDDEN),
        },
        (Some(other), _) => {
            return Err(Error::ConfigInvalid(format!(
                "unknown model `{other}`; expected softmax_linear or mlp"
            )))
        }
    };
    set(&mut train.local_epochs, doc.usize("train.local_epochs")?);
    set(&mut train.batch_size, doc.usize("train.batch_size")?);
    set(&mut train.learning_rate, doc.real("train.learning_rate")?);
    set(&mut train.momentum, doc.real("train.momentum")?);
    set(&mut train.weight_decay, doc.real("train.weight_decay")?);
    set(&mut train.clip_norm, doc.real("train.clip_norm")?);

    let mut dataset = SyntheticSpec::default();
    set(&mut dataset.num_classes, doc.usize("dataset.classes")?);
    set(&mut dataset.dim, doc.usize("dataset.dim")?);
    set(&mut dataset.per_class, doc.usize("dataset.per_class")?);
    set(&mut dataset.test_per_class, doc.usize("dataset.test_per_class")?);
    set(&mut dataset.separation, doc.real("dataset.separation")?);
    dataset.seed = doc.uint("dataset.seed")?;

    let rule = parse_rule(&mut doc)?;
    let wrappers = parse_wrappers(&mut doc)?;
    let attack = parse_attack(&mut doc)?;
    let seeds = doc.uint_list("seeds")?.unwrap_or_else(|| vec![0]);
    let output_dir = doc
        .string("output_dir")?
        .unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into())
        .into();
    doc.finish()?;

    let config = ExperimentConfig {
        sim: SimulationConfig {
            federation,
            partition,
            train,
            defense: AggregatorSpec { rule, wrappers },
            attack,
            dataset,
        },
        seeds,
        output_dir,
    };
    config.validate()?;
    Ok(config)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn list<T: ToString>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(T::to_string).collect();
    format!("[{}]", parts.join(", "))
}

/// The fully defaulted document; parsing it gives back `config`.
pub fn emit_config(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |key: &str, value: String| {
        writeln!(out, "{key} = {value}").expect("writing to a String");
    };
    let sim = &config.sim;
    let fed = &sim.federation;
    kv("federation.n", fed.n.to_string());
    kv("federation.f", fed.f.to_string());
    kv("federation.sampled", fed.sampled_per_round.to_string());
    kv("federation.rounds", fed.rounds.to_string());
    if let Some(ids) = &fed.byzantine_ids {
        kv("federation.byzantine_ids", list(ids));
    }

    kv("partition.beta", sim.partition.beta.to_string());
    kv("partition.iid", sim.partition.iid.to_string());
    if let Some(seed) = sim.partition.seed {
        kv("partition.seed", seed.to_string());
    }

    let train = &sim.train;
    kv("train.model", quote(train.model.name()));
    if let ModelKind::Mlp { hidden } = train.model {
        kv("train.hidden", hidden.to_string());
    }
    kv("train.local_epochs", train.local_epochs.to_string());
    kv("train.batch_size", train.batch_size.to_string());
    kv("train.learning_rate", train.learning_rate.to_string());
    kv("train.momentum", train.momentum.to_string());
    kv("train.weight_decay", train.weight_decay.to_string());
    kv("train.clip_norm", train.clip_norm.to_string());

    let data = &sim.dataset;
    kv("dataset.classes", data.num_classes.to_string());
    kv("dataset.dim", data.dim.to_string());
    kv("dataset.per_class", data.per_class.to_string());
    kv("dataset.test_per_class", data.test_per_class.to_string());
    kv("dataset.separation", data.separation.to_string());
    if let Some(seed) = data.seed {
        kv("dataset.seed", seed.to_string());
    }

    let defense = &sim.defense;
    kv("defense", quote(defense.rule.name()));
    match defense.rule {
        Rule::Rfa(RfaParams {
            iterations,
            smoothing,
        }) => {
            kv("defense.iterations", iterations.to_string());
            kv("defense.smoothing", smoothing.to_string());
        }
        Rule::CClip(CClipParams {
            inner_iterations,
            clip_radius,
            warm_start,
        }) => {
            kv("defense.inner_iterations", inner_iterations.to_string());
            kv("defense.clip_radius", clip_radius.to_string());
            kv("defense.warm_start", warm_start.to_string());
        }
        Rule::Dnc(DncParams {
            filter_fraction,
            outer_iterations,
            subsample_dim,
            seed,
        }) => {
            kv("defense.filter_fraction", filter_fraction.to_string());
            kv("defense.outer_iterations", outer_iterations.to_string());
            kv("defense.subsample_dim", subsample_dim.to_string());
            kv("defense.seed", seed.to_string());
        }
        _ => {}
    }
    let names: Vec<String> = defense.wrappers.iter().map(|w| quote(w.name())).collect();
    kv("wrappers", format!("[{}]", names.join(", ")));
    // A document holds one bucketing parameter set.
    if let Some(Wrapper::Bucketing(p)) = defense
        .wrappers
        .iter()
        .find(|w| matches!(w, Wrapper::Bucketing(_)))
    {
        kv("bucketing.size", p.bucket_size.to_string());
        kv("bucketing.seed", p.seed.to_string());
    }

    kv("attack", quote(sim.attack.name()));
    match sim.attack {
        Attack::Strike(StrikeParams {
            nu,
            bisect_tolerance,
            bisect_max_iters,
        }) => {
            kv("attack.nu", nu.to_string());
            kv("attack.bisect_tolerance", bisect_tolerance.to_string());
            kv("attack.bisect_max_iters", bisect_max_iters.to_string());
        }
        Attack::Lie(LieParams { z }) => kv("attack.z", z.to_string()),
        Attack::Ipm(IpmParams { epsilon }) => kv("attack.epsilon", epsilon.to_string()),
        Attack::MinMax(MinOptParams { gamma_init, tau })
        | Attack::MinSum(MinOptParams { gamma_init, tau }) => {
            kv("attack.gamma_init", gamma_init.to_string());
            kv("attack.tau", tau.to_string());
        }
        _ => {}
    }

    kv("seeds", list(&config.seeds));
    kv("output_dir", quote(&config.output_dir.to_string_lossy()));
    out
}
