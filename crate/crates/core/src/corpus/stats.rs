use serde::{Deserialize, Serialize};

use super::{Dataset, QuestionKind, Split};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub true_false: usize,
    pub multiple_choice: usize,
}

impl KindCounts {
    pub fn total(&self) -> usize {
        self.true_false + self.multiple_choice
    }

    fn bump(&mut self, kind: QuestionKind) {
        match kind {
            QuestionKind::TrueFalse => self.true_false += 1,
            QuestionKind::MultipleChoice => self.multiple_choice += 1,
        }
    }
}

/// Question counts per split and kind, plus corpus-wide lesson and topic counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: KindCounts,
    pub validation: KindCounts,
    pub test: KindCounts,
    pub lessons: usize,
    pub topics: usize,
}

impl SplitStats {
    pub fn compute(ds: &Dataset) -> Self {
        let mut stats = SplitStats {
            lessons: ds.lessons().len(),
            topics: ds.topics().len(),
            ..Default::default()
        };
        for q in ds.questions() {
            stats.split_mut(q.split).bump(q.kind);
        }
        stats
    }

    pub fn split(&self, split: Split) -> &KindCounts {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut KindCounts {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn total_questions(&self) -> usize {
        Split::ALL.iter().map(|s| self.split(*s).total()).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindExpectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_false: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiple_choice: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
}

impl From<KindCounts> for KindExpectation {
    fn from(c: KindCounts) -> Self {
        KindExpectation {
            true_false: Some(c.true_false),
            multiple_choice: Some(c.multiple_choice),
            total: Some(c.total()),
        }
    }
}

/// Expected statistics; any field left out is not checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsExpectation {
    #[serde(default)]
    pub train: KindExpectation,
    #[serde(default)]
    pub validation: KindExpectation,
    #[serde(default)]
    pub test: KindExpectation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lessons: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<usize>,
}

impl From<SplitStats> for StatsExpectation {
    fn from(s: SplitStats) -> Self {
        StatsExpectation {
            train: s.train.into(),
            validation: s.validation.into(),
            test: s.test.into(),
            lessons: Some(s.lessons),
            topics: Some(s.topics),
        }
    }
}

impl StatsExpectation {
    /// Non-diagram question counts of the public CK12 textbook QA release.
    pub fn ck12_release() -> Self {
        let split = |tf, mc| KindExpectation {
            true_false: Some(tf),
            multiple_choice: Some(mc),
            total: Some(tf + mc),
        };
        StatsExpectation {
            train: split(3490, 5163),
            validation: split(998, 1530),
            test: split(912, 1600),
            lessons: Some(1076),
            topics: None,
        }
    }

    pub fn compare(&self, actual: &SplitStats) -> Vec<StatMismatch> {
        let mut out = Vec::new();
        let mut check = |field: String, expected: Option<usize>, actual: usize| {
            if let Some(expected) = expected {
                if expected != actual {
                    out.push(StatMismatch { field, expected, actual });
                }
            }
        };
        for split in Split::ALL {
            let e = match split {
                Split::Train => &self.train,
                Split::Validation => &self.validation,
                Split::Test => &self.test,
            };
            let a = actual.split(split);
            check(format!("{split}.true_false"), e.true_false, a.true_false);
            check(format!("{split}.multiple_choice"), e.multiple_choice, a.multiple_choice);
            check(format!("{split}.total"), e.total, a.total());
        }
        check("lessons".into(), self.lessons, actual.lessons);
        check("topics".into(), self.topics, actual.topics);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatMismatch {
    pub field: String,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub stats: SplitStats,
    pub mismatches: Vec<StatMismatch>,
}

impl StatsReport {
    pub fn all_match(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("split        true_false  multiple_choice  total\n");
        for split in Split::ALL {
            let c = self.stats.split(split);
            s.push_str(&format!(
                "{:<12} {:>10}  {:>15}  {:>5}\n",
                split.as_str(),
                c.true_false,
                c.multiple_choice,
                c.total()
            ));
        }
        s.push_str(&format!("lessons: {}  topics: {}\n", self.stats.lessons, self.stats.topics));
        if self.mismatches.is_empty() {
            s.push_str("all expected counts match\n");
        } else {
            for m in &self.mismatches {
                s.push_str(&format!(
                    "MISMATCH {}: expected {} got {}\n",
                    m.field, m.expected, m.actual
                ));
            }
        }
        s
    }
}
