//! Answers queries from dataset labels during supervised training.

use std::sync::Arc;

use super::{Consult, Expert, ExpertFeedback, ExpertQuery, FeedbackSource};
use crate::trie::Decision;

/// Labels indexed by line number. A query is answered by majority vote over
/// its sample lines with full confidence; ties count as anomalous.
#[derive(Debug, Clone)]
pub struct GroundTruthExpert {
    labels: Arc<[bool]>,
}

impl GroundTruthExpert {
    pub fn new(labels: Arc<[bool]>) -> Self {
        Self { labels }
    }

    pub fn judge(&self, query: &ExpertQuery) -> Option<ExpertFeedback> {
        let (mut bad, mut seen) = (0usize, 0usize);
        for s in &query.sample_lines {
            if let Some(&l) = usize::try_from(s.line_no).ok().and_then(|i| self.labels.get(i)) {
                seen += 1;
                bad += usize::from(l);
            }
        }
        if seen == 0 {
            return None;
        }
        let decision = if 2 * bad >= seen {
            Decision::Anomaly
        } else {
            Decision::Normal
        };
        Some(ExpertFeedback {
            decision,
            confidence: 1.0,
            source: FeedbackSource::Human,
            rationale: Some("dataset label".into()),
        })
    }
}

impl Expert for GroundTruthExpert {
    fn name(&self) -> &str {
        "ground_truth"
    }

    fn consult(&mut self, query: &ExpertQuery) -> Consult {
        match self.judge(query) {
            Some(fb) => Consult::Answer(fb),
            None => Consult::Abstain,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trie::SampleLine;

    fn q(lines: &[u64]) -> ExpertQuery {
        ExpertQuery {
            query_id: 1,
            cluster_id: 0,
            template_text: "t".into(),
            rendered: "t".into(),
            tp: 1.0,
            sample_lines: lines
                .iter()
                .map(|&line_no| SampleLine {
                    line_no,
                    text: String::new(),
                })
                .collect(),
            issued_at: 0,
        }
    }

    #[test]
    fn majority_of_samples_with_full_confidence() {
        let ex = GroundTruthExpert::new(vec![false, true, true, false].into());
        let fb = ex.judge(&q(&[1, 2, 3])).unwrap();
        assert_eq!((fb.decision, fb.confidence), (Decision::Anomaly, 1.0));
        assert_eq!(ex.judge(&q(&[0, 3])).unwrap().decision, Decision::Normal);
        assert_eq!(ex.judge(&q(&[0, 1])).unwrap().decision, Decision::Anomaly);
        assert!(ex.judge(&q(&[99])).is_none());
        assert!(ex.judge(&q(&[])).is_none());
    }
}
