//! Seeded generator for a small corpus in the native release layout, used
//! when the real release is not at hand.
//!
//! Every topic introduces one made-up term together with a verb and three
//! property words, and every lesson shares two theme words across its
//! topics. Questions ask which term matches a property description, or
//! state a (possibly falsified) description as a true/false item. Some
//! questions are filed under a lesson other than the one holding their
//! source topic, so retrieval can land outside the question's lesson.
//!
//! Alongside the split files the generator writes the expected statistics
//! and a response script for the scripted model, with the label each
//! scripted response should parse to.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::corpus::{KindCounts, Split, SplitStats, StatsExpectation};

pub const GENERATOR_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 7;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCRIPT_FILE: &str = "script.json";
pub const SCRIPT_EXPECTED_FILE: &str = "script_expected.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub train_lessons: usize,
    pub validation_lessons: usize,
    pub test_lessons: usize,
    pub questions_per_lesson: usize,
    /// Share of true/false questions.
    pub tf_share: f64,
    /// Share of questions filed under a lesson other than their source.
    pub cross_lesson_share: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: DEFAULT_SEED,
            train_lessons: 24,
            validation_lessons: 8,
            test_lessons: 8,
            questions_per_lesson: 5,
            tf_share: 0.4,
            cross_lesson_share: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub generator_version: u32,
    pub spec: SyntheticSpec,
    pub expected: StatsExpectation,
    pub diagram_questions: usize,
    pub adjunct_topics: usize,
    pub empty_blocks: usize,
    pub files: BTreeMap<String, Split>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// File name to native-layout JSON document.
    pub files: BTreeMap<String, Value>,
    pub manifest: SyntheticManifest,
    /// Question id to scripted model response.
    pub script: BTreeMap<String, String>,
    /// Question id to the label the scripted response parses to, if any.
    pub script_expected: BTreeMap<String, Option<char>>,
}

const VERBS: [&str; 10] = [
    "absorbs", "releases", "stores", "transports", "reflects", "produces", "filters", "compresses", "dissolves",
    "shelters",
];

const FILLERS: [&str; 6] = [
    "Scientists measure this carefully in the field.",
    "Students can observe the effect with simple tools.",
    "The process repeats over many seasons.",
    "Changes are slow but they add up over time.",
    "Models help explain what happens next.",
    "Careful notes make the pattern easier to see.",
];

struct Words {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Words {
    fn next(&mut self, syllables: usize) -> String {
        const C: &[u8] = b"bdfgklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(C[self.rng.gen_range(0..C.len())] as char);
                w.push(V[self.rng.gen_range(0..V.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

struct TopicFacts {
    topic_id: String,
    term: String,
    verb: &'static str,
    props: [String; 3],
}

impl TopicFacts {
    fn description(&self) -> String {
        format!("{} {} and {}", self.verb, self.props[0], self.props[1])
    }
}

fn choice(text: &str, key: &str) -> Value {
    json!({"processedText": text, "idStructural": format!("{key}.")})
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed),
        used: HashSet::new(),
    };
    let n_lessons = spec.train_lessons + spec.validation_lessons + spec.test_lessons;
    let split_of = |i: usize| {
        if i < spec.train_lessons {
            Split::Train
        } else if i < spec.train_lessons + spec.validation_lessons {
            Split::Validation
        } else {
            Split::Test
        }
    };

    let property_pool: Vec<String> = (0..n_lessons * 6).map(|_| words.next(2)).collect();
    let mut themes = Vec::new();
    let mut facts: Vec<TopicFacts> = Vec::new();
    let mut lesson_topics: Vec<Vec<usize>> = Vec::new();
    let mut topic_no = 1;
    for _ in 0..n_lessons {
        themes.push((words.next(3), words.next(2)));
        let n_topics = rng.gen_range(3..=4);
        let mut ids = Vec::new();
        for _ in 0..n_topics {
            let mut props: Vec<String> = property_pool.choose_multiple(&mut rng, 3).cloned().collect();
            props.shuffle(&mut rng);
            ids.push(facts.len());
            facts.push(TopicFacts {
                topic_id: format!("T_{topic_no:04}"),
                term: words.next(3),
                verb: VERBS[rng.gen_range(0..VERBS.len())],
                props: [props[0].clone(), props[1].clone(), props[2].clone()],
            });
            topic_no += 1;
        }
        lesson_topics.push(ids);
    }

    let mut lessons_json: Vec<Vec<Value>> = vec![Vec::new(); 3];
    let mut stats = SplitStats::default();
    let mut diagram_questions = 0;
    let mut adjunct_topics = 0;
    let mut empty_blocks = 0;
    let mut script = BTreeMap::new();
    let mut script_expected = BTreeMap::new();
    let mut question_no = 1;

    for lesson in 0..n_lessons {
        let split = split_of(lesson);
        let lesson_id = format!("L_{:04}", lesson + 1);
        let (theme_a, theme_b) = &themes[lesson];

        let mut topics = Map::new();
        for (order, &fi) in lesson_topics[lesson].iter().enumerate() {
            let f = &facts[fi];
            let filler_a = FILLERS[rng.gen_range(0..FILLERS.len())];
            let filler_b = FILLERS[rng.gen_range(0..FILLERS.len())];
            let text = format!(
                "In {theme_a} {theme_b}, the {term} {verb} {p0} and {p1}. {filler_a} Without the {term}, the {p2} would change. {filler_b}",
                term = f.term,
                verb = f.verb,
                p0 = f.props[0],
                p1 = f.props[1],
                p2 = f.props[2],
            );
            topics.insert(
                f.topic_id.clone(),
                json!({
                    "globalID": f.topic_id,
                    "topicName": format!("the {}", f.term),
                    "orderID": format!("t_{order}"),
                    "content": {"text": text},
                }),
            );
        }
        stats.topics += topics.len();

        let mut adjuncts = Map::new();
        let vocab: Map<String, Value> = lesson_topics[lesson]
            .iter()
            .map(|&fi| {
                let f = &facts[fi];
                (f.term.clone(), Value::String(format!("something that {}", f.description())))
            })
            .collect();
        adjuncts.insert("Vocabulary".into(), json!({"content": {"text": vocab}}));
        adjunct_topics += 1;
        if rng.gen_bool(0.5) {
            adjuncts.insert(
                "Lesson Summary".into(),
                json!({"content": {"text": format!("This lesson covered {theme_a} {theme_b}.")}}),
            );
            adjunct_topics += 1;
        } else {
            adjuncts.insert("Introduction".into(), json!({"content": {"text": ""}}));
            empty_blocks += 1;
        }
        stats.topics += adjuncts.len() - usize::from(adjuncts.contains_key("Introduction"));

        let mut nd = Map::new();
        for _ in 0..spec.questions_per_lesson {
            let qid = format!("NDQ_{question_no:06}");
            question_no += 1;
            let source_lesson = if rng.gen_bool(spec.cross_lesson_share) {
                rng.gen_range(0..n_lessons)
            } else {
                lesson
            };
            let src = &facts[*lesson_topics[source_lesson].choose(&mut rng).expect("topics")];
            let (q, options, gold) = if rng.gen_bool(spec.tf_share) {
                stats_bump(&mut stats, split, true);
                let truthful = rng.gen_bool(0.5);
                let statement = if truthful {
                    format!("The {} {}.", src.term, src.description())
                } else {
                    let other = loop {
                        let o = &facts[rng.gen_range(0..facts.len())];
                        if o.topic_id != src.topic_id {
                            break o;
                        }
                    };
                    format!("The {} {}.", src.term, other.description())
                };
                let choices = json!({"a": choice("true", "a"), "b": choice("false", "b")});
                let gold = if truthful { "a" } else { "b" };
                let q = json!({
                    "globalID": qid,
                    "beingAsked": {"processedText": statement},
                    "answerChoices": choices,
                    "correctAnswer": {"processedText": gold},
                    "questionType": "True or False",
                    "questionSubType": "True or False",
                });
                (q, vec!["true".to_string(), "false".to_string()], if truthful { 0 } else { 1 })
            } else {
                stats_bump(&mut stats, split, false);
                let n_opts = [3, 4, 4, 4, 5][rng.gen_range(0..5)];
                let mut terms = vec![src.term.clone()];
                while terms.len() < n_opts {
                    let t = &facts[rng.gen_range(0..facts.len())].term;
                    if !terms.contains(t) {
                        terms.push(t.clone());
                    }
                }
                terms.shuffle(&mut rng);
                let gold = terms.iter().position(|t| *t == src.term).expect("present");
                let keys: Vec<String> = (0..n_opts).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
                let choices: Map<String, Value> = keys
                    .iter()
                    .zip(&terms)
                    .map(|(k, t)| (k.clone(), choice(t, k)))
                    .collect();
                let q = json!({
                    "globalID": qid,
                    "beingAsked": {"processedText": format!("Which of the following {}?", src.description())},
                    "answerChoices": choices,
                    "correctAnswer": {"processedText": keys[gold]},
                    "questionType": "Multiple Choice",
                    "questionSubType": "Multiple Choice",
                });
                (q, terms, gold)
            };
            let (response, expected) = scripted_response(&mut rng, &options, gold);
            script.insert(qid.clone(), response);
            script_expected.insert(qid.clone(), expected);
            nd.insert(qid, q);
        }

        let mut diagram = Map::new();
        let dq = format!("DQ_{:06}", lesson + 1);
        diagram.insert(
            dq.clone(),
            json!({
                "globalID": dq,
                "beingAsked": {"processedText": "Which label in the diagram shows the process?"},
                "answerChoices": {"a": choice("1", "a"), "b": choice("2", "b")},
                "correctAnswer": {"processedText": "a"},
                "imagePath": format!("question_images/{dq}.png"),
                "questionType": "Diagram Multiple Choice",
            }),
        );
        diagram_questions += 1;

        lessons_json[split_index(split)].push(json!({
            "globalID": lesson_id,
            "lessonName": format!("{theme_a} {theme_b}"),
            "topics": topics,
            "adjunctTopics": adjuncts,
            "questions": {"nonDiagramQuestions": nd, "diagramQuestions": diagram},
        }));
    }
    stats.lessons = n_lessons;

    let names = [
        ("tqa_synthetic_train.json", Split::Train),
        ("tqa_synthetic_val.json", Split::Validation),
        ("tqa_synthetic_test.json", Split::Test),
    ];
    let mut files = BTreeMap::new();
    let mut file_splits = BTreeMap::new();
    for (name, split) in names {
        files.insert(name.to_string(), Value::Array(std::mem::take(&mut lessons_json[split_index(split)])));
        file_splits.insert(name.to_string(), split);
    }
    SyntheticCorpus {
        files,
        manifest: SyntheticManifest {
            generator_version: GENERATOR_VERSION,
            spec: *spec,
            expected: stats.into(),
            diagram_questions,
            adjunct_topics,
            empty_blocks,
            files: file_splits,
        },
        script,
        script_expected,
    }
}

fn split_index(s: Split) -> usize {
    match s {
        Split::Train => 0,
        Split::Validation => 1,
        Split::Test => 2,
    }
}

fn stats_bump(stats: &mut SplitStats, split: Split, tf: bool) {
    let c: &mut KindCounts = match split {
        Split::Train => &mut stats.train,
        Split::Validation => &mut stats.validation,
        Split::Test => &mut stats.test,
    };
    if tf {
        c.true_false += 1;
    } else {
        c.multiple_choice += 1;
    }
}

/// A response in one of several shapes, and the label it should parse to.
fn scripted_response(rng: &mut ChaCha8Rng, options: &[String], gold: usize) -> (String, Option<char>) {
    let label = |i: usize| (b'A' + i as u8) as char;
    let wrong = (gold + 1 + rng.gen_range(0..options.len() - 1)) % options.len();
    match rng.gen_range(0..20) {
        0..=10 => (format!("({}) {}", label(gold), options[gold]), Some(label(gold))),
        11..=12 => (format!("The answer is ({}).", label(gold)), Some(label(gold))),
        13..=14 => (format!("It is {}.", options[gold]), Some(label(gold))),
        15..=17 => (format!("({}) {}", label(wrong), options[wrong]), Some(label(wrong))),
        18 => (
            format!("Either ({}) or ({}) could be right.", label(gold), label(wrong)),
            None,
        ),
        _ => ("I am not sure.".to_string(), None),
    }
}

fn to_pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Writes split files, manifest and script into `dir`; returns the paths.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> std::io::Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    for (name, doc) in &corpus.files {
        put(name, to_pretty(doc))?;
    }
    put(MANIFEST_FILE, to_pretty(&corpus.manifest))?;
    put(SCRIPT_FILE, to_pretty(&corpus.script))?;
    put(SCRIPT_EXPECTED_FILE, to_pretty(&corpus.script_expected))?;
    Ok(written)
}

pub fn read_manifest(dir: &Path) -> std::io::Result<SyntheticManifest> {
    let raw = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&raw).map_err(std::io::Error::other)
}
