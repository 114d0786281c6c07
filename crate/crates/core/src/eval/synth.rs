//! Synthetic labeled streams in the BGL line format.
//!
//! Template frequencies follow a Zipf law. Parameters are numbers of at
//! least four digits, hex values, IP addresses or words drawn from a small
//! bounded set. Some templates only start to appear partway through
//! (drift). Anomalies are short bursts of rare templates tagged `SYNTH`.

use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, LabeledLine};

/// Alert tag written on anomalous lines.
pub const ANOMALY_TAG: &str = "SYNTH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub lines: usize,
    /// Normal templates.
    pub templates: usize,
    pub anomaly_templates: usize,
    /// Number of anomaly bursts; each is one to three lines.
    pub anomaly_bursts: usize,
    /// Distinct values per word parameter. Each parameter slot has its own
    /// values.
    pub param_cardinality: usize,
    /// Whether word parameters are generated at all.
    pub word_params: bool,
    /// Share of normal templates that only appear after `drift_at`.
    pub drift_share: f64,
    /// Position of the drift point as a fraction of the stream.
    pub drift_at: f64,
    pub zipf_exponent: f64,
    /// Lines per second.
    pub rate: f64,
    /// Epoch seconds of the first line.
    pub start: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lines: 100_000,
            templates: 100,
            anomaly_templates: 10,
            anomaly_bursts: 20,
            param_cardinality: 16,
            word_params: true,
            drift_share: 0.1,
            drift_at: 0.5,
            zipf_exponent: 1.1,
            rate: 0.25,
            start: 1_117_838_570,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Word(usize),
    Num,
    Hex,
    Ip,
    /// Index into the stream's word parameter sets.
    Param(usize),
}

#[derive(Debug, Clone)]
struct Template {
    parts: Vec<Part>,
    component: &'static str,
    level: &'static str,
}

/// One generated line before formatting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthLine {
    pub secs: i64,
    pub node: String,
    pub component: &'static str,
    pub level: &'static str,
    pub content: String,
    pub anomalous: bool,
}

impl SynthLine {
    pub fn to_bgl(&self) -> String {
        let tag = if self.anomalous { ANOMALY_TAG } else { "-" };
        let (y, mo, d, h, mi, s) = civil(self.secs);
        format!(
            "{tag} {secs} {y:04}.{mo:02}.{d:02} {node} {y:04}-{mo:02}-{d:02}-{h:02}.{mi:02}.{s:02}.000000 {node} RAS {comp} {level} {content}",
            secs = self.secs,
            node = self.node,
            comp = self.component,
            level = self.level,
            content = self.content,
        )
    }
}

/// UTC calendar fields for epoch seconds.
fn civil(secs: i64) -> (i64, u32, u32, u32, u32, u32) {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400) as u32;
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d, rem / 3600, rem / 60 % 60, rem % 60)
}

const NORMAL_COMPONENTS: [&str; 4] = ["KERNEL", "APP", "MMCS", "DISCOVERY"];
const NORMAL_LEVELS: [&str; 4] = ["INFO", "INFO", "INFO", "WARNING"];
const ANOMALY_COMPONENTS: [&str; 2] = ["KERNEL", "HARDWARE"];
const ANOMALY_LEVELS: [&str; 2] = ["FATAL", "FAILURE"];

fn pseudo_word(rng: &mut impl Rng) -> String {
    const C: &[u8] = b"bcdfghjklmnprstvwz";
    const V: &[u8] = b"aeiou";
    let syllables = rng.random_range(2..=4);
    let mut s = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        s.push(C[rng.random_range(0..C.len())] as char);
        s.push(V[rng.random_range(0..V.len())] as char);
    }
    s
}

/// A stream generator. Iterate it for lines in time order.
pub struct SynthStream {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    words: Vec<String>,
    param_sets: Vec<Vec<usize>>,
    normal: Vec<Template>,
    anomalies: Vec<Template>,
    early: WeightedIndex<f64>,
    late: WeightedIndex<f64>,
    bursts: Vec<(usize, usize, usize)>,
    next_burst: usize,
    emitted: usize,
}

impl SynthStream {
    pub fn new(cfg: SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut words = Vec::new();
        let mut word_set = std::collections::HashSet::new();
        let mut make_word = |rng: &mut ChaCha8Rng, words: &mut Vec<String>| loop {
            let w = pseudo_word(rng);
            if word_set.insert(w.clone()) {
                words.push(w);
                return words.len() - 1;
            }
        };
        let mut param_sets: Vec<Vec<usize>> = Vec::new();
        let mut template = |rng: &mut ChaCha8Rng, words: &mut Vec<String>, anomalous: bool| {
            let fixed = rng.random_range(3..=7);
            let params = rng.random_range(0..=3);
            let mut parts: Vec<Part> = (0..fixed).map(|_| Part::Word(make_word(rng, words))).collect();
            for _ in 0..params {
                let at = rng.random_range(1..=parts.len());
                let kinds = if cfg.word_params { 4 } else { 3 };
                let p = match rng.random_range(0..kinds) {
                    0 => Part::Num,
                    1 => Part::Hex,
                    2 => Part::Ip,
                    _ => {
                        let set = (0..cfg.param_cardinality.max(1)).map(|_| make_word(rng, words)).collect();
                        param_sets.push(set);
                        Part::Param(param_sets.len() - 1)
                    }
                };
                parts.insert(at, p);
            }
            let (component, level) = if anomalous {
                (
                    ANOMALY_COMPONENTS[rng.random_range(0..ANOMALY_COMPONENTS.len())],
                    ANOMALY_LEVELS[rng.random_range(0..ANOMALY_LEVELS.len())],
                )
            } else {
                (
                    NORMAL_COMPONENTS[rng.random_range(0..NORMAL_COMPONENTS.len())],
                    NORMAL_LEVELS[rng.random_range(0..NORMAL_LEVELS.len())],
                )
            };
            Template { parts, component, level }
        };
        let templates = cfg.templates.max(1);
        let normal: Vec<Template> = (0..templates).map(|_| template(&mut rng, &mut words, false)).collect();
        let anomalies: Vec<Template> = (0..cfg.anomaly_templates).map(|_| template(&mut rng, &mut words, true)).collect();

        let zipf: Vec<f64> = (1..=templates).map(|r| 1.0 / (r as f64).powf(cfg.zipf_exponent)).collect();
        let drifting = ((templates as f64) * cfg.drift_share.clamp(0.0, 1.0)).floor() as usize;
        // The rarest ranks are the drifting ones.
        let early_w: Vec<f64> = zipf
            .iter()
            .enumerate()
            .map(|(i, &w)| if i >= templates - drifting && i > 0 { 0.0 } else { w })
            .collect();
        let early = WeightedIndex::new(&early_w).expect("positive weights");
        let late = WeightedIndex::new(&zipf).expect("positive weights");

        let mut bursts: Vec<(usize, usize, usize)> = if anomalies.is_empty() || cfg.lines == 0 {
            Vec::new()
        } else {
            (0..cfg.anomaly_bursts)
                .map(|_| {
                    (
                        rng.random_range(0..cfg.lines),
                        rng.random_range(0..anomalies.len()),
                        rng.random_range(1..=3),
                    )
                })
                .collect()
        };
        bursts.sort_unstable();
        Self {
            cfg,
            rng,
            words,
            param_sets,
            normal,
            anomalies,
            early,
            late,
            bursts,
            next_burst: 0,
            emitted: 0,
        }
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    fn render(&mut self, t: &Template) -> String {
        let mut s = String::with_capacity(64);
        for (i, p) in t.parts.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            match *p {
                Part::Word(w) => s.push_str(&self.words[w]),
                Part::Num => s.push_str(&self.rng.random_range(1000..1_000_000u32).to_string()),
                Part::Hex => s.push_str(&format!("0x{:08x}", self.rng.random::<u32>())),
                Part::Ip => {
                    let ip: [u8; 4] = self.rng.random();
                    s.push_str(&format!("{}.{}.{}.{}", ip[0], ip[1], ip[2], ip[3]));
                }
                Part::Param(set) => {
                    let values = &self.param_sets[set];
                    let w = values[self.rng.random_range(0..values.len())];
                    s.push_str(&self.words[w]);
                }
            }
        }
        s
    }
}

impl Iterator for SynthStream {
    type Item = SynthLine;

    fn next(&mut self) -> Option<SynthLine> {
        if self.emitted >= self.cfg.lines {
            return None;
        }
        let i = self.emitted;
        self.emitted += 1;
        let secs = self.cfg.start + (i as f64 / self.cfg.rate.max(1e-9)).floor() as i64;
        let node = format!("R{:02}-M{}-N{}", self.rng.random_range(0..64), self.rng.random_range(0..2), self.rng.random_range(0..16));
        let anomalous_template = match self.bursts.get(self.next_burst) {
            Some(&(at, tpl, len)) if i >= at => {
                if len <= 1 {
                    self.next_burst += 1;
                } else {
                    self.bursts[self.next_burst].2 -= 1;
                }
                Some(tpl)
            }
            _ => None,
        };
        let (t, anomalous) = match anomalous_template {
            Some(a) => (self.anomalies[a].clone(), true),
            None => {
                let drifted = (i as f64) >= self.cfg.drift_at * self.cfg.lines as f64;
                let idx = if drifted {
                    self.late.sample(&mut self.rng)
                } else {
                    self.early.sample(&mut self.rng)
                };
                (self.normal[idx].clone(), false)
            }
        };
        let content = self.render(&t);
        Some(SynthLine {
            secs,
            node,
            component: t.component,
            level: t.level,
            content,
            anomalous,
        })
    }
}

/// Writes the stream as BGL-format lines. Returns the line count.
pub fn write_bgl(cfg: &SynthConfig, mut out: impl Write) -> io::Result<usize> {
    let mut n = 0;
    for l in SynthStream::new(cfg.clone()) {
        writeln!(out, "{}", l.to_bgl())?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// The stream as BGL text held in memory.
pub fn generate_bgl_text(cfg: &SynthConfig) -> String {
    let mut s = String::with_capacity(cfg.lines * 100);
    for l in SynthStream::new(cfg.clone()) {
        s.push_str(&l.to_bgl());
        s.push('\n');
    }
    s
}

/// The stream as a dataset, with the same fields the BGL loader would give.
pub fn generate_dataset(cfg: &SynthConfig) -> LabeledDataset {
    let mut comps = std::collections::HashMap::<&str, std::sync::Arc<str>>::new();
    let mut intern = |s: &'static str| std::sync::Arc::clone(comps.entry(s).or_insert_with(|| s.into()));
    let lines = SynthStream::new(cfg.clone())
        .map(|l| LabeledLine {
            timestamp: Some(l.secs * 1000),
            label: l.anomalous,
            level: Some(intern(l.level)),
            component: Some(intern(l.component)),
            text: l.content,
        })
        .collect();
    LabeledDataset {
        name: format!("synth-{}", cfg.seed),
        lines,
        skipped: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::dataset::{load_dataset, DatasetFormat};

    fn small() -> SynthConfig {
        SynthConfig {
            lines: 2000,
            templates: 20,
            anomaly_templates: 3,
            anomaly_bursts: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn civil_dates() {
        assert_eq!(civil(0), (1970, 1, 1, 0, 0, 0));
        assert_eq!(civil(1_117_838_570), (2005, 6, 3, 22, 42, 50));
        assert_eq!(civil(951_782_400), (2000, 2, 29, 0, 0, 0));
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(generate_bgl_text(&small()), generate_bgl_text(&small()));
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(generate_bgl_text(&small()), generate_bgl_text(&other));
    }

    #[test]
    fn text_round_trips_through_the_loader() {
        let cfg = small();
        let text = generate_bgl_text(&cfg);
        let loaded = load_dataset(text.as_bytes(), DatasetFormat::Bgl, "x", None).unwrap();
        let direct = generate_dataset(&cfg);
        assert_eq!(loaded.lines, direct.lines);
        let bursts = direct.anomalies();
        assert!((5..=15).contains(&bursts), "{bursts}");
    }

    #[test]
    fn drifting_templates_start_late() {
        let cfg = SynthConfig {
            lines: 20_000,
            templates: 10,
            drift_share: 0.5,
            zipf_exponent: 0.0,
            anomaly_templates: 0,
            ..SynthConfig::default()
        };
        let ds = generate_dataset(&cfg);
        let first: std::collections::HashSet<String> =
            ds.lines[..10_000].iter().map(|l| l.text.split(' ').next().unwrap().to_string()).collect();
        let second: std::collections::HashSet<String> =
            ds.lines[10_000..].iter().map(|l| l.text.split(' ').next().unwrap().to_string()).collect();
        assert!(first.len() < second.len(), "{} vs {}", first.len(), second.len());
    }
}
