//! Sectioned `key = value` run configuration.

use std::fmt;
use std::ops::Range;

use ctp_core::causal::InterventionMode;
use ctp_core::harness::{Objective, TrainConfig};
use ctp_core::model::{ModelConfig, OutputMode};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

/// One configuration problem, located by 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Where the training and evaluation windows come from.
///
/// Either `train` + `test` (files or directories of trajectory files), or
/// `dir` + `held_out` for a leave-one-out split over the files in `dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataConfig {
    pub train: String,
    pub test: String,
    pub dir: String,
    pub held_out: String,
    pub train_stride: usize,
    pub test_stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: String::new(),
            test: String::new(),
            dir: String::new(),
            held_out: String::new(),
            train_stride: 1,
            test_stride: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::new(ModelConfig::stgat()),
            data: DataConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    /// Whether the text set `train.seed` itself.
    pub seed_given: bool,
}

const STGAT_KEYS: [&str; 7] = [
    "motion_hidden",
    "gat_heads",
    "gat_head_dim",
    "gat_out",
    "graph_hidden",
    "noise_dim",
    "decoder_embed",
];
const STGCNN_KEYS: [&str; 4] = ["hidden", "st_kernel", "txp_layers", "txp_kernel"];
const INTERVENTION_KEYS: [&str; 4] = ["causal", "mode", "half_width", "decay"];
const TRAIN_KEYS: [&str; 10] = [
    "objective",
    "epochs",
    "batch_size",
    "learning_rate",
    "clip_norm",
    "variety_k",
    "gan_weight",
    "disc_hidden",
    "seed",
    "val_windows",
];
const DATA_KEYS: [&str; 6] = ["train", "test", "dir", "held_out", "train_stride", "test_stride"];

struct Cx<'a> {
    text: &'a str,
    issues: Vec<ConfigIssue>,
}

impl Cx<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn issue(&mut self, span: Range<usize>, message: String) {
        let line = self.line(span);
        self.issues.push(ConfigIssue { line, message });
    }

    fn integer(&mut self, key: &str, v: &Spanned<DeValue>, min: i128, max: i128) -> Option<i128> {
        let parsed = match v.get_ref() {
            DeValue::Integer(i) => i128::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok(),
            _ => None,
        };
        match parsed {
            None if matches!(v.get_ref(), DeValue::Integer(_)) => {
                self.issue(v.span(), format!("`{key}` is not a valid integer"));
                None
            }
            None => {
                self.issue(v.span(), format!("`{key}` must be an integer, found {}", v.get_ref().type_str()));
                None
            }
            Some(n) if n < min || n > max => {
                self.issue(v.span(), format!("`{key}` = {n} is out of range ({min} to {max})"));
                None
            }
            Some(n) => Some(n),
        }
    }

    fn size(&mut self, key: &str, v: &Spanned<DeValue>) -> Option<usize> {
        self.integer(key, v, 1, u32::MAX as i128).map(|n| n as usize)
    }

    fn float(&mut self, key: &str, v: &Spanned<DeValue>, ok: impl Fn(f64) -> bool, range: &str) -> Option<f64> {
        let parsed = match v.get_ref() {
            DeValue::Float(f) => f.as_str().replace('_', "").parse::<f64>().ok(),
            DeValue::Integer(i) => i128::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok().map(|n| n as f64),
            _ => None,
        };
        match parsed {
            None => {
                self.issue(v.span(), format!("`{key}` must be a number, found {}", v.get_ref().type_str()));
                None
            }
            Some(x) if !(x.is_finite() && ok(x)) => {
                self.issue(v.span(), format!("`{key}` = {x} is out of range ({range})"));
                None
            }
            Some(x) => Some(x),
        }
    }

    fn boolean(&mut self, key: &str, v: &Spanned<DeValue>) -> Option<bool> {
        let b = v.get_ref().as_bool();
        if b.is_none() {
            self.issue(v.span(), format!("`{key}` must be true or false, found {}", v.get_ref().type_str()));
        }
        b
    }

    fn string(&mut self, key: &str, v: &Spanned<DeValue>) -> Option<String> {
        let s = v.get_ref().as_str().map(str::to_string);
        if s.is_none() {
            self.issue(v.span(), format!("`{key}` must be a string, found {}", v.get_ref().type_str()));
        }
        s
    }
}

type Section<'a> = Vec<(String, Range<usize>, Spanned<DeValue<'a>>)>;

fn section<'a>(cx: &mut Cx, root: &DeTable<'a>, name: &str) -> (Section<'a>, Option<Range<usize>>) {
    for (k, v) in root.iter() {
        if k.get_ref() == name {
            return match v.get_ref() {
                DeValue::Table(t) => (
                    t.iter()
                        .map(|(k, v)| (k.get_ref().to_string(), k.span(), v.clone()))
                        .collect(),
                    Some(k.span()),
                ),
                other => {
                    cx.issue(k.span(), format!("`{name}` must be a section, found {}", other.type_str()));
                    (Vec::new(), None)
                }
            };
        }
    }
    (Vec::new(), None)
}

fn find<'s, 'a>(sec: &'s Section<'a>, key: &str) -> Option<&'s Spanned<DeValue<'a>>> {
    sec.iter().find(|(k, _, _)| k == key).map(|(_, _, v)| v)
}

/// Parses and range-checks a configuration, collecting every problem found.
pub fn validate_config(text: &str) -> Result<ParsedConfig, Vec<ConfigIssue>> {
    let mut cx = Cx {
        text,
        issues: Vec::new(),
    };
    let root = match DeTable::parse(text) {
        Ok(r) => r.into_inner(),
        Err(e) => {
            let span = e.span().unwrap_or(0..0);
            cx.issue(span, format!("syntax error: {}", e.message()));
            return Err(cx.issues);
        }
    };
    for (k, _) in root.iter() {
        if !["model", "intervention", "train", "data"].contains(&k.get_ref().as_ref()) {
            cx.issue(k.span(), format!("unknown section `{}`", k.get_ref()));
        }
    }

    // model
    let (model, model_span) = section(&mut cx, &root, "model");
    let mut family = "stgat".to_string();
    if let Some(v) = find(&model, "family") {
        match cx.string("family", v).as_deref() {
            Some(f @ ("stgat" | "stgcnn")) => family = f.to_string(),
            Some(other) => cx.issue(v.span(), format!("`family` must be \"stgat\" or \"stgcnn\", found \"{other}\"")),
            None => {}
        }
    }
    let mut mc = if family == "stgat" {
        ModelConfig::stgat()
    } else {
        ModelConfig::stgcnn()
    };
    for (k, ks, v) in &model {
        if k == "family" {
            continue;
        }
        let slot = match (&mut mc, k.as_str()) {
            (ModelConfig::Stgat(c), "motion_hidden") => &mut c.motion_hidden,
            (ModelConfig::Stgat(c), "gat_heads") => &mut c.gat_heads,
            (ModelConfig::Stgat(c), "gat_head_dim") => &mut c.gat_head_dim,
            (ModelConfig::Stgat(c), "gat_out") => &mut c.gat_out,
            (ModelConfig::Stgat(c), "graph_hidden") => &mut c.graph_hidden,
            (ModelConfig::Stgat(c), "noise_dim") => &mut c.noise_dim,
            (ModelConfig::Stgat(c), "decoder_embed") => &mut c.decoder_embed,
            (ModelConfig::Stgcnn(c), "hidden") => &mut c.hidden,
            (ModelConfig::Stgcnn(c), "st_kernel") => &mut c.st_kernel,
            (ModelConfig::Stgcnn(c), "txp_layers") => &mut c.txp_layers,
            (ModelConfig::Stgcnn(c), "txp_kernel") => &mut c.txp_kernel,
            _ => {
                let other = STGAT_KEYS.contains(&k.as_str()) || STGCNN_KEYS.contains(&k.as_str());
                let msg = if other {
                    format!("`model.{k}` does not apply to family \"{family}\"")
                } else {
                    format!("unknown key `model.{k}`")
                };
                cx.issue(ks.clone(), msg);
                continue;
            }
        };
        if let Some(n) = cx.size(k, v) {
            *slot = n;
        }
    }
    let mut model_ok = true;
    if let Err(e) = mc.validate() {
        model_ok = false;
        cx.issue(model_span.clone().unwrap_or(0..0), format!("[model]: {e}"));
    }

    let mut tc = TrainConfig::new(mc);

    // intervention
    let (iv, _) = section(&mut cx, &root, "intervention");
    for (k, ks, v) in &iv {
        match k.as_str() {
            "causal" => {
                if let Some(b) = cx.boolean(k, v) {
                    tc.settings.causal = b;
                }
            }
            "mode" => match cx.string(k, v) {
                Some(s) => match InterventionMode::parse(&s) {
                    Some(m) => tc.settings.intervention = m,
                    None => cx.issue(v.span(), format!("`mode` must be \"zero\", \"mean\" or \"random\", found \"{s}\"")),
                },
                None => {}
            },
            "half_width" => {
                if let Some(x) = cx.float(k, v, |x| x > 0.0, "> 0") {
                    tc.settings.half_width = x;
                }
            }
            "decay" => {
                if let Some(x) = cx.float(k, v, |x| x > 0.0 && x < 1.0, "between 0 and 1, exclusive") {
                    tc.settings.decay = x;
                }
            }
            _ => cx.issue(ks.clone(), format!("unknown key `intervention.{k}`")),
        }
    }

    // train
    let (tr, _) = section(&mut cx, &root, "train");
    let mut seed_given = false;
    let mut objective_span = None;
    for (k, ks, v) in &tr {
        match k.as_str() {
            "objective" => {
                objective_span = Some(v.span());
                if let Some(s) = cx.string(k, v) {
                    match Objective::parse(&s) {
                        Some(o) => tc.objective = o,
                        None => cx.issue(
                            v.span(),
                            format!("`objective` must be one of causal_l2, variety_k, causal_nll, causal_gan; found \"{s}\""),
                        ),
                    }
                }
            }
            "epochs" => tc.epochs = cx.size(k, v).unwrap_or(tc.epochs),
            "batch_size" => tc.batch_size = cx.size(k, v).unwrap_or(tc.batch_size),
            "variety_k" => tc.variety_k = cx.size(k, v).unwrap_or(tc.variety_k),
            "disc_hidden" => tc.disc_hidden = cx.size(k, v).unwrap_or(tc.disc_hidden),
            "val_windows" => tc.val_windows = cx.integer(k, v, 0, u32::MAX as i128).map(|n| n as usize).unwrap_or(tc.val_windows),
            "seed" => {
                seed_given = true;
                tc.seed = cx.integer(k, v, 0, u64::MAX as i128).map(|n| n as u64).unwrap_or(tc.seed);
            }
            "learning_rate" => tc.learning_rate = cx.float(k, v, |x| x > 0.0, "> 0").unwrap_or(tc.learning_rate),
            "clip_norm" => tc.clip_norm = cx.float(k, v, |x| x > 0.0, "> 0").unwrap_or(tc.clip_norm),
            "gan_weight" => tc.gan_weight = cx.float(k, v, |x| x >= 0.0, ">= 0").unwrap_or(tc.gan_weight),
            _ => cx.issue(ks.clone(), format!("unknown key `train.{k}`")),
        }
    }
    if model_ok && tc.objective == Objective::CausalNll && mc.output_mode() != OutputMode::Gaussian {
        cx.issue(
            objective_span.clone().unwrap_or(0..0),
            format!("objective causal_nll needs a Gaussian head; family \"{family}\" has point outputs"),
        );
    }

    // data
    let (dt, data_span) = section(&mut cx, &root, "data");
    let mut data = DataConfig::default();
    for (k, ks, v) in &dt {
        match k.as_str() {
            "train" => data.train = cx.string(k, v).unwrap_or_default(),
            "test" => data.test = cx.string(k, v).unwrap_or_default(),
            "dir" => data.dir = cx.string(k, v).unwrap_or_default(),
            "held_out" => data.held_out = cx.string(k, v).unwrap_or_default(),
            "train_stride" => data.train_stride = cx.size(k, v).unwrap_or(data.train_stride),
            "test_stride" => data.test_stride = cx.size(k, v).unwrap_or(data.test_stride),
            _ => cx.issue(ks.clone(), format!("unknown key `data.{k}`")),
        }
    }
    let explicit = !data.train.is_empty() || !data.test.is_empty();
    let loo = !data.dir.is_empty() || !data.held_out.is_empty();
    let data_line = data_span.unwrap_or(0..0);
    if explicit && loo {
        cx.issue(data_line, "[data]: use either train/test or dir/held_out, not both".into());
    } else if explicit && (data.train.is_empty() || data.test.is_empty()) {
        cx.issue(data_line, "[data]: train and test must be given together".into());
    } else if loo && (data.dir.is_empty() || data.held_out.is_empty()) {
        cx.issue(data_line, "[data]: dir and held_out must be given together".into());
    }

    if cx.issues.is_empty() {
        Ok(ParsedConfig {
            config: RunConfig { train: tc, data },
            seed_given,
        })
    } else {
        cx.issues.sort_by_key(|i| i.line);
        Err(cx.issues)
    }
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Every setting, defaults included, in a form [`validate_config`] reads
/// back to the same configuration.
pub fn normalized(c: &RunConfig) -> String {
    let t = &c.train;
    let mut s = String::from("[model]\n");
    match t.model {
        ModelConfig::Stgat(m) => {
            s.push_str("family = \"stgat\"\n");
            let vals = [
                m.motion_hidden,
                m.gat_heads,
                m.gat_head_dim,
                m.gat_out,
                m.graph_hidden,
                m.noise_dim,
                m.decoder_embed,
            ];
            for (k, v) in STGAT_KEYS.iter().zip(vals) {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        ModelConfig::Stgcnn(m) => {
            s.push_str("family = \"stgcnn\"\n");
            for (k, v) in STGCNN_KEYS.iter().zip([m.hidden, m.st_kernel, m.txp_layers, m.txp_kernel]) {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
    }
    let st = &t.settings;
    s.push_str(&format!(
        "\n[intervention]\n{} = {}\n{} = {}\n{} = {:?}\n{} = {:?}\n",
        INTERVENTION_KEYS[0],
        st.causal,
        INTERVENTION_KEYS[1],
        quoted(st.intervention.name()),
        INTERVENTION_KEYS[2],
        st.half_width,
        INTERVENTION_KEYS[3],
        st.decay
    ));
    let train_vals = [
        quoted(t.objective.name()),
        t.epochs.to_string(),
        t.batch_size.to_string(),
        format!("{:?}", t.learning_rate),
        format!("{:?}", t.clip_norm),
        t.variety_k.to_string(),
        format!("{:?}", t.gan_weight),
        t.disc_hidden.to_string(),
        t.seed.to_string(),
        t.val_windows.to_string(),
    ];
    s.push_str("\n[train]\n");
    for (k, v) in TRAIN_KEYS.iter().zip(train_vals) {
        s.push_str(&format!("{k} = {v}\n"));
    }
    let d = &c.data;
    let data_vals = [
        quoted(&d.train),
        quoted(&d.test),
        quoted(&d.dir),
        quoted(&d.held_out),
        d.train_stride.to_string(),
        d.test_stride.to_string(),
    ];
    s.push_str("\n[data]\n");
    for (k, v) in DATA_KEYS.iter().zip(data_vals) {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}
