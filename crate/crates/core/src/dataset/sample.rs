//! Example sampling and train/test construction.
//!
//! Every example draws from its own RNG stream derived from the dataset
//! seed and the example index, so generation order never matters.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::oracle::execute_hard_program;
use crate::dataset::templates::{
    enumerate_templates, enumerate_text_match, text_cell_vocabulary, Category, GrammarConfig,
    QuestionTemplate, TaskKind, TemplateTok,
};
use crate::dataset::{Column, ColumnValues, Example, QuestionNumber, TableInstance};
use crate::error::{Error, Result};

/// Sampling regime: training tables and test tables use different ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    /// Cell (and question-number) sampling range.
    fn range(self) -> (f64, f64) {
        match self {
            Phase::Train => (-100.0, 100.0),
            Phase::Test => (-200.0, 200.0),
        }
    }

    fn rows<R: Rng>(self, rng: &mut R) -> usize {
        match self {
            Phase::Train => rng.gen_range(30..=100),
            Phase::Test => 120,
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Render a question number the way it appears in the token stream.
pub fn render_number(v: f64) -> String {
    format!("{v:.2}")
}

const COLUMN_LETTERS: [&str; 10] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"];

/// Draw one example from a template: a fresh table, fresh question numbers,
/// and the oracle answer for the gold program.
pub fn sample_example<R: Rng>(
    template: &QuestionTemplate,
    phase: Phase,
    rng: &mut R,
) -> Result<Example> {
    let (lo, hi) = phase.range();
    let m = phase.rows(rng);
    let words = text_cell_vocabulary();

    let mut columns = Vec::new();
    for k in 0..template.text_columns {
        let values = (0..m)
            .map(|_| words[rng.gen_range(0..words.len())].clone())
            .collect();
        columns.push(Column {
            name: COLUMN_LETTERS[k].to_string(),
            values: ColumnValues::Text(values),
        });
    }
    for k in 0..template.numeric_columns {
        let values = (0..m).map(|_| round2(rng.gen_range(lo..hi))).collect();
        columns.push(Column {
            name: COLUMN_LETTERS[template.text_columns + k].to_string(),
            values: ColumnValues::Numeric(values),
        });
    }
    let table = TableInstance { rows: m, columns };

    let n_slots = template.number_slots();
    let numbers: Vec<f64> = (0..n_slots).map(|_| round2(rng.gen_range(lo..hi))).collect();

    let mut question = Vec::new();
    let mut extracted = Vec::new();
    let mut match_words = Vec::new();
    let mut non_number_count = 0usize;
    for tok in &template.tokens {
        match tok {
            TemplateTok::Word(w) => {
                question.push(w.clone());
                if words.contains(w) {
                    match_words.push(w.clone());
                }
                non_number_count += 1;
            }
            TemplateTok::Number(slot) => {
                let v = numbers[*slot];
                question.push(render_number(v));
                extracted.push(QuestionNumber {
                    value: v,
                    left_index: non_number_count,
                });
            }
        }
    }

    let answer = execute_hard_program(&template.program, &table, &numbers, &match_words)?;

    Ok(Example {
        template_id: template.id.clone(),
        question,
        numbers: extracted,
        table,
        answer,
        gold_program: template.program.clone(),
    })
}

/// Train/test split of a template universe. Test templates keep a flag
/// saying whether they are eligible to appear during training.
#[derive(Clone, Debug)]
pub struct TemplateSplit {
    pub train: Vec<QuestionTemplate>,
    pub test: Vec<(QuestionTemplate, bool)>,
}

/// Hold out a `1 - train_fraction` share of templates from training.
/// Every template stays in the test set; held-out ones are flagged unseen.
pub fn split_templates(
    templates: &[QuestionTemplate],
    seed: u64,
    train_fraction: f64,
) -> TemplateSplit {
    let mut order: Vec<usize> = (0..templates.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let keep = ((templates.len() as f64) * train_fraction).ceil() as usize;
    let eligible: HashSet<usize> = order.into_iter().take(keep).collect();

    TemplateSplit {
        train: templates
            .iter()
            .enumerate()
            .filter(|(i, _)| eligible.contains(i))
            .map(|(_, t)| t.clone())
            .collect(),
        test: templates
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), eligible.contains(&i)))
            .collect(),
    }
}

/// A generated dataset plus bookkeeping about template coverage.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    /// Per test example: was its template drawn at least once in training?
    pub test_seen: Vec<bool>,
    /// Fraction of distinct test templates observed during training.
    pub seen_fraction: f64,
    pub test_templates: usize,
}

/// Per-column-count template pools for training draws.
struct TrainPools {
    pools: Vec<Vec<QuestionTemplate>>,
}

impl TrainPools {
    fn build(cfg: &GrammarConfig, held_out: &HashSet<String>) -> Result<Self> {
        let mut pools = Vec::new();
        match cfg.task {
            TaskKind::TextMatch => {
                let (t_max, n_max) = cfg.test_shape();
                for t in 1..=t_max {
                    for n in 1..=n_max {
                        pools.push(filter_held_out(enumerate_text_match(t, n)?, held_out));
                    }
                }
            }
            _ => {
                for c in 1..=cfg.max_columns {
                    pools.push(filter_held_out(enumerate_templates(cfg, c)?, held_out));
                }
            }
        }
        if pools.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidConfig(
                "a training pool became empty after holding out templates".into(),
            ));
        }
        Ok(TrainPools { pools })
    }

    /// Draw a template: pick a pool uniformly, then a template by the
    /// task's rule (category-uniform for the plain single-column grammar,
    /// uniform over templates otherwise).
    fn draw<'p, R: Rng>(&'p self, task: TaskKind, rng: &mut R) -> &'p QuestionTemplate {
        let pool = &self.pools[rng.gen_range(0..self.pools.len())];
        if task == TaskKind::Single {
            let categories = [
                Category::Aggregation,
                Category::Comparison,
                Category::Logic,
                Category::Arithmetic,
            ];
            let cat = categories[rng.gen_range(0..categories.len())];
            let within: Vec<&QuestionTemplate> =
                pool.iter().filter(|t| t.category == cat).collect();
            if within.is_empty() {
                // the whole category was held out; fall back to uniform
                return &pool[rng.gen_range(0..pool.len())];
            }
            within[rng.gen_range(0..within.len())]
        } else {
            &pool[rng.gen_range(0..pool.len())]
        }
    }
}

fn filter_held_out(
    templates: Vec<QuestionTemplate>,
    held_out: &HashSet<String>,
) -> Vec<QuestionTemplate> {
    templates
        .into_iter()
        .filter(|t| !held_out.contains(&t.id))
        .collect()
}

/// Generate a complete dataset: `train_size` training draws (the number of
/// columns resampled per example) and `test_multiplier` test examples per
/// test-shape template.
pub fn build_dataset(
    cfg: &GrammarConfig,
    train_size: usize,
    test_multiplier: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    let test_universe = enumerate_templates(cfg, cfg.max_columns)?;
    let split = split_templates(&test_universe, seed, train_fraction);
    let held_out: HashSet<String> = split
        .test
        .iter()
        .filter(|(_, eligible)| !eligible)
        .map(|(t, _)| t.id.clone())
        .collect();

    let pools = TrainPools::build(cfg, &held_out)?;

    let mut train = Vec::with_capacity(train_size);
    let mut drawn: HashSet<String> = HashSet::new();
    for i in 0..train_size {
        let mut rng = example_rng(seed, 2 * i as u64);
        let template = pools.draw(cfg.task, &mut rng);
        drawn.insert(template.id.clone());
        train.push(sample_example(template, Phase::Train, &mut rng)?);
    }

    let mut test = Vec::new();
    let mut test_seen = Vec::new();
    let mut seen_templates = 0usize;
    for (tidx, (template, _)) in split.test.iter().enumerate() {
        let seen = drawn.contains(&template.id);
        if seen {
            seen_templates += 1;
        }
        for k in 0..test_multiplier {
            let mut rng = example_rng(seed, 2 * (tidx * test_multiplier + k) as u64 + 1);
            test.push(sample_example(template, Phase::Test, &mut rng)?);
            test_seen.push(seen);
        }
    }

    let test_templates = split.test.len();
    Ok(Dataset {
        train,
        test,
        test_seen,
        seen_fraction: seen_templates as f64 / test_templates.max(1) as f64,
        test_templates,
    })
}

fn example_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Answer;

    fn single() -> GrammarConfig {
        GrammarConfig {
            task: TaskKind::Single,
            max_columns: 1,
        }
    }

    #[test]
    fn train_samples_respect_ranges() {
        let templates = enumerate_templates(&single(), 1).unwrap();
        let mut rng = example_rng(7, 0);
        let ex = sample_example(&templates[0], Phase::Train, &mut rng).unwrap();
        assert!(ex.table.rows >= 30 && ex.table.rows <= 100);
        if let ColumnValues::Numeric(v) = &ex.table.columns[0].values {
            assert!(v.iter().all(|x| (-100.0..=100.0).contains(x)));
        } else {
            panic!("numeric column expected");
        }
    }

    #[test]
    fn test_samples_have_120_rows_and_wider_range() {
        let templates = enumerate_templates(&single(), 1).unwrap();
        // a template with numbers so we also check the number range
        let tpl = templates
            .iter()
            .find(|t| t.number_slots() == 2)
            .expect("two-number template");
        let mut rng = example_rng(3, 1);
        let ex = sample_example(tpl, Phase::Test, &mut rng).unwrap();
        assert_eq!(ex.table.rows, 120);
        for n in &ex.numbers {
            assert!((-200.0..=200.0).contains(&n.value));
        }
    }

    #[test]
    fn same_seed_gives_identical_example() {
        let templates = enumerate_templates(&single(), 1).unwrap();
        let a = sample_example(&templates[5], Phase::Train, &mut example_rng(11, 4)).unwrap();
        let b = sample_example(&templates[5], Phase::Train, &mut example_rng(11, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn answers_match_independent_oracle_recomputation() {
        // regenerate the answer through the oracle from the stored fields
        let cfg = GrammarConfig {
            task: TaskKind::Multi,
            max_columns: 3,
        };
        let ds = build_dataset(&cfg, 50, 1, 1.0, 99).unwrap();
        for ex in ds.train.iter().chain(ds.test.iter()) {
            let numbers: Vec<f64> = ex.numbers.iter().map(|n| n.value).collect();
            let words: Vec<String> = ex
                .question
                .iter()
                .filter(|w| w.starts_with("word:"))
                .cloned()
                .collect();
            let again =
                execute_hard_program(&ex.gold_program, &ex.table, &numbers, &words).unwrap();
            assert_eq!(again, ex.answer, "{}", ex.template_id);
        }
    }

    #[test]
    fn lookup_masks_live_in_one_column() {
        let ds = build_dataset(
            &GrammarConfig {
                task: TaskKind::Multi,
                max_columns: 2,
            },
            120,
            1,
            1.0,
            5,
        )
        .unwrap();
        let mut saw_lookup = false;
        for ex in ds.train.iter().chain(ds.test.iter()) {
            if let Answer::Lookup { mask } = &ex.answer {
                saw_lookup = true;
                let mut nonzero_cols = HashSet::new();
                for row in mask {
                    for (j, v) in row.iter().enumerate() {
                        if *v != 0 {
                            nonzero_cols.insert(j);
                        }
                    }
                }
                assert!(nonzero_cols.len() <= 1, "{}", ex.template_id);
            }
        }
        assert!(saw_lookup);
    }

    #[test]
    fn single_column_covers_all_templates_and_reports_full_seen() {
        let ds = build_dataset(&single(), 2000, 1, 1.0, 1).unwrap();
        assert_eq!(ds.test_templates, 23);
        assert_eq!(ds.test.len(), 23);
        assert_eq!(ds.seen_fraction, 1.0);
    }

    #[test]
    fn full_fraction_split_flags_everything_eligible() {
        let templates = enumerate_templates(&single(), 1).unwrap();
        let split = split_templates(&templates, 0, 1.0);
        assert_eq!(split.train.len(), 23);
        assert!(split.test.iter().all(|(_, s)| *s));
    }

    #[test]
    fn held_out_templates_never_drawn() {
        let cfg = GrammarConfig {
            task: TaskKind::Multi,
            max_columns: 2,
        };
        let universe = enumerate_templates(&cfg, 2).unwrap();
        let split = split_templates(&universe, 4, 0.5);
        let held: HashSet<String> = split
            .test
            .iter()
            .filter(|(_, e)| !e)
            .map(|(t, _)| t.id.clone())
            .collect();
        assert!(!held.is_empty());
        let ds = build_dataset(&cfg, 500, 1, 0.5, 4).unwrap();
        for ex in &ds.train {
            assert!(!held.contains(&ex.template_id));
        }
        // unseen flags line up with the held-out set
        for (ex, seen) in ds.test.iter().zip(&ds.test_seen) {
            if held.contains(&ex.template_id) {
                assert!(!seen);
            }
        }
    }

    #[test]
    fn text_cells_come_from_the_ten_word_vocabulary() {
        let cfg = GrammarConfig {
            task: TaskKind::TextMatch,
            max_columns: 2,
        };
        let vocab: HashSet<String> = text_cell_vocabulary().into_iter().collect();
        let ds = build_dataset(&cfg, 60, 1, 1.0, 8).unwrap();
        for ex in ds.train.iter().chain(ds.test.iter()) {
            for col in &ex.table.columns {
                if let ColumnValues::Text(values) = &col.values {
                    assert!(values.iter().all(|w| vocab.contains(w)));
                }
            }
        }
    }
}
