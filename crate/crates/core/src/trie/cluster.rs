use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::template::{
    canonical_text, render_with_sample, sorted_unique, wildcard_count, TemplateMatcher,
};

pub type ClusterId = u32;

/// Raw lines kept per cluster for expert context.
pub const MAX_SAMPLES: usize = 5;

/// Binary expert judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Anomaly,
}

impl Decision {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Self::Normal),
            1 => Some(Self::Anomaly),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Self::Normal => 0,
            Self::Anomaly => 1,
        }
    }
}

/// Feedback cached on a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeedback {
    pub decision: Decision,
    pub confidence: f64,
}

/// Sorted line numbers stored as LEB128 deltas.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemberIds {
    bytes: Vec<u8>,
    len: u64,
    last: u64,
}

impl MemberIds {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, id: u64) {
        if self.len > 0 && id < self.last {
            let mut all: Vec<u64> = self.iter().collect();
            let at = all.partition_point(|&x| x <= id);
            all.insert(at, id);
            *self = all.into_iter().collect();
            return;
        }
        let delta = if self.len == 0 { id } else { id - self.last };
        write_varint(&mut self.bytes, delta);
        self.last = id;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        let mut pos = 0;
        let mut acc = 0u64;
        std::iter::from_fn(move || {
            if pos >= self.bytes.len() {
                return None;
            }
            acc += read_varint(&self.bytes, &mut pos);
            Some(acc)
        })
    }

    /// Merges another sorted list into this one.
    pub fn merge(&mut self, other: &MemberIds) {
        let mut out = Vec::with_capacity((self.len + other.len) as usize);
        {
            let (mut a, mut b) = (self.iter().peekable(), other.iter().peekable());
            loop {
                match (a.peek(), b.peek()) {
                    (Some(&x), Some(&y)) if x <= y => {
                        out.push(x);
                        a.next();
                    }
                    (_, Some(&y)) => {
                        out.push(y);
                        b.next();
                    }
                    (Some(&x), None) => {
                        out.push(x);
                        a.next();
                    }
                    (None, None) => break,
                }
            }
        }
        *self = out.into_iter().collect();
    }

    pub fn heap_bytes(&self) -> usize {
        self.bytes.capacity()
    }
}

impl FromIterator<u64> for MemberIds {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut m = MemberIds::default();
        for id in iter {
            m.push(id);
        }
        m
    }
}

fn write_varint(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

fn read_varint(buf: &[u8], pos: &mut usize) -> u64 {
    let mut v = 0u64;
    let mut shift = 0;
    loop {
        let b = buf[*pos];
        *pos += 1;
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return v;
        }
        shift += 7;
    }
}

/// A raw line kept as context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLine {
    pub line_no: u64,
    pub text: String,
}

/// A group of lines sharing one template.
#[derive(Debug, Clone)]
pub struct LogCluster {
    pub(crate) id: ClusterId,
    pub(crate) domain: String,
    template: Vec<String>,
    members: MemberIds,
    prior_count: u64,
    feedback: Option<ClusterFeedback>,
    last_seen: Option<i64>,
    samples: VecDeque<SampleLine>,
    matcher: Option<TemplateMatcher>,
    unique: Vec<String>,
    wildcards: usize,
}

impl LogCluster {
    pub(crate) fn new(id: ClusterId, domain: String, template: Vec<String>) -> Self {
        let mut c = Self {
            id,
            domain,
            template: Vec::new(),
            members: MemberIds::default(),
            prior_count: 0,
            feedback: None,
            last_seen: None,
            samples: VecDeque::new(),
            matcher: None,
            unique: Vec::new(),
            wildcards: 0,
        };
        c.set_template(template);
        c
    }

    pub(crate) fn with_prior_count(mut self, n: u64) -> Self {
        self.prior_count = n;
        self
    }

    pub fn id(&self) -> ClusterId {
        self.id
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn template(&self) -> &[String] {
        &self.template
    }

    /// Tokens joined by single spaces; the knowledge-base key.
    pub fn template_text(&self) -> String {
        canonical_text(&self.template)
    }

    /// Template rendered with the punctuation of the most recent sample line.
    pub fn rendered(&self) -> String {
        match self.samples.back() {
            Some(s) => render_with_sample(&self.template, &s.text),
            None => self.template_text(),
        }
    }

    /// Lines seen in this run plus lines carried by an imported catalog.
    pub fn count(&self) -> u64 {
        self.members.len() + self.prior_count
    }

    pub fn prior_count(&self) -> u64 {
        self.prior_count
    }

    pub fn members(&self) -> &MemberIds {
        &self.members
    }

    pub fn feedback(&self) -> Option<ClusterFeedback> {
        self.feedback
    }

    pub fn last_seen(&self) -> Option<i64> {
        self.last_seen
    }

    pub fn samples(&self) -> impl Iterator<Item = &SampleLine> {
        self.samples.iter()
    }

    pub fn wildcard_count(&self) -> usize {
        self.wildcards
    }

    pub(crate) fn set_feedback(&mut self, fb: Option<ClusterFeedback>) {
        self.feedback = fb;
    }

    pub(crate) fn set_template(&mut self, template: Vec<String>) {
        self.unique = sorted_unique(&template)
            .into_iter()
            .map(str::to_string)
            .collect();
        self.wildcards = wildcard_count(&template);
        self.template = template;
        self.matcher = None;
    }

    pub(crate) fn unique_tokens(&self) -> &[String] {
        &self.unique
    }

    pub(crate) fn matcher(&mut self) -> &TemplateMatcher {
        let template = &self.template;
        self.matcher
            .get_or_insert_with(|| TemplateMatcher::new(template))
    }

    pub(crate) fn add_member(&mut self, line_no: u64, timestamp: Option<i64>, raw: Option<String>) {
        self.members.push(line_no);
        if timestamp.is_some() {
            self.last_seen = self.last_seen.max(timestamp);
        }
        if let Some(text) = raw {
            if self.samples.len() == MAX_SAMPLES {
                self.samples.pop_front();
            }
            self.samples.push_back(SampleLine { line_no, text });
        }
    }

    /// Absorbs another cluster; this cluster's template is kept.
    pub(crate) fn absorb(&mut self, other: LogCluster) {
        self.members.merge(&other.members);
        self.prior_count += other.prior_count;
        self.last_seen = self.last_seen.max(other.last_seen);
        if self.feedback.is_none() {
            self.feedback = other.feedback;
        }
        let mut samples: Vec<SampleLine> = self.samples.drain(..).chain(other.samples).collect();
        samples.sort_by_key(|s| s.line_no);
        let skip = samples.len().saturating_sub(MAX_SAMPLES);
        self.samples = samples.into_iter().skip(skip).collect();
    }
}
