//! Question template grammar: enumeration of every question pattern a task
//! configuration admits, together with its gold program.

use serde::{Deserialize, Serialize};

use crate::dataset::GoldStep;
use crate::error::{Error, Result};
use crate::ops::OpKind;

/// Programs run for exactly this many steps; shorter gold programs are
/// padded with leading resets.
pub const PROGRAM_STEPS: usize = 4;

const COLUMN_LETTERS: [&str; 10] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"];

/// The ten words text cells are drawn from.
pub fn text_cell_vocabulary() -> Vec<String> {
    (0..10).map(|k| format!("word:{k}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Single,
    Multi,
    Variability,
    TextMatch,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(TaskKind::Single),
            "multi" => Ok(TaskKind::Multi),
            "variability" => Ok(TaskKind::Variability),
            "textmatch" => Ok(TaskKind::TextMatch),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub task: TaskKind,
    pub max_columns: usize,
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.max_columns;
        match self.task {
            TaskKind::Single if c != 1 => Err(Error::InvalidConfig(
                "single-column task requires max_columns = 1".into(),
            )),
            TaskKind::Multi | TaskKind::Variability if !(1..=10).contains(&c) => Err(
                Error::InvalidConfig("max_columns must be between 1 and 10".into()),
            ),
            TaskKind::TextMatch if c != 2 && c != 5 => Err(Error::InvalidConfig(
                "text-match task supports 2 columns (1 text + 1 numeric) or 5 (2 text + 3 numeric)"
                    .into(),
            )),
            _ => Ok(()),
        }
    }

    /// `(text, numeric)` column counts at test time.
    pub fn test_shape(&self) -> (usize, usize) {
        match self.task {
            TaskKind::TextMatch => {
                if self.max_columns == 2 {
                    (1, 1)
                } else {
                    (2, 3)
                }
            }
            _ => (0, self.max_columns),
        }
    }
}

/// One token of a question pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TemplateTok {
    Word(String),
    /// Placeholder for the `i`-th sampled number.
    Number(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerKind {
    Scalar,
    Lookup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    Aggregation,
    Comparison,
    Logic,
    Arithmetic,
    TextMatch,
}

/// A question pattern with placeholders, plus the program that answers it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub id: String,
    pub tokens: Vec<TemplateTok>,
    /// Exactly [`PROGRAM_STEPS`] steps, front-padded with resets.
    pub program: Vec<GoldStep>,
    pub answer_kind: AnswerKind,
    pub category: Category,
    /// Leading text columns of the table this template runs against.
    pub text_columns: usize,
    /// Numeric columns following the text columns.
    pub numeric_columns: usize,
}

impl QuestionTemplate {
    pub fn number_slots(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, TemplateTok::Number(_)))
            .count()
    }
}

/// A multi-token surface form for an operation word.
type Phrase = Vec<String>;

fn phrases(words: &[&str]) -> Vec<Phrase> {
    words
        .iter()
        .map(|w| w.split(' ').map(str::to_string).collect())
        .collect()
}

struct OpWords {
    sum: Vec<Phrase>,
    count: Vec<Phrase>,
    print: Vec<Phrase>,
    greater: Vec<Phrase>,
    lesser: Vec<Phrase>,
    diff: Vec<Phrase>,
}

impl OpWords {
    fn base() -> Self {
        OpWords {
            sum: phrases(&["sum"]),
            count: phrases(&["count"]),
            print: phrases(&["print"]),
            greater: phrases(&["greater"]),
            lesser: phrases(&["lesser"]),
            diff: phrases(&["diff"]),
        }
    }

    /// Synonym sets for the word-variability experiments.
    fn variability() -> Self {
        OpWords {
            sum: phrases(&["sum", "total", "total of", "sum of"]),
            count: phrases(&["count", "count of", "how many"]),
            print: phrases(&["print", "display", "show"]),
            greater: phrases(&[
                "greater",
                "greater than",
                "bigger",
                "bigger than",
                "larger",
                "larger than",
            ]),
            lesser: phrases(&["lesser", "lesser than", "smaller", "smaller than", "under"]),
            diff: phrases(&["difference", "difference between"]),
        }
    }
}

/// Aggregating operations a question can end with.
#[derive(Clone, Copy, PartialEq)]
enum Agg {
    Sum,
    Count,
    Print,
}

impl Agg {
    fn words<'a>(&self, w: &'a OpWords) -> &'a [Phrase] {
        match self {
            Agg::Sum => &w.sum,
            Agg::Count => &w.count,
            Agg::Print => &w.print,
        }
    }

    fn takes_column(&self) -> bool {
        !matches!(self, Agg::Count)
    }

    fn step(&self, col: Option<&str>) -> GoldStep {
        match self {
            Agg::Sum => GoldStep {
                op: OpKind::Sum,
                col: col.map(str::to_string),
            },
            Agg::Count => GoldStep::new(OpKind::Count),
            Agg::Print => GoldStep {
                op: OpKind::Assign,
                col: col.map(str::to_string),
            },
        }
    }

    fn answer_kind(&self) -> AnswerKind {
        match self {
            Agg::Print => AnswerKind::Lookup,
            _ => AnswerKind::Scalar,
        }
    }
}

struct Builder {
    templates: Vec<QuestionTemplate>,
    text_columns: usize,
    numeric_columns: usize,
}

impl Builder {
    fn push(
        &mut self,
        tokens: Vec<TemplateTok>,
        program: Vec<GoldStep>,
        answer_kind: AnswerKind,
        category: Category,
    ) {
        debug_assert!(program.len() <= PROGRAM_STEPS);
        let mut padded = vec![GoldStep::new(OpKind::Reset); PROGRAM_STEPS - program.len()];
        padded.extend(program);
        let n_slots = tokens
            .iter()
            .filter(|t| matches!(t, TemplateTok::Number(_)))
            .count();
        let id = tokens
            .iter()
            .map(|t| match t {
                TemplateTok::Word(w) => w.clone(),
                TemplateTok::Number(i) => {
                    if n_slots > 1 {
                        format!("[number{}]", i + 1)
                    } else {
                        "[number]".to_string()
                    }
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        self.templates.push(QuestionTemplate {
            id,
            tokens,
            program: padded,
            answer_kind,
            category,
            text_columns: self.text_columns,
            numeric_columns: self.numeric_columns,
        });
    }
}

fn words_of(phrase: &Phrase) -> Vec<TemplateTok> {
    phrase.iter().map(|w| TemplateTok::Word(w.clone())).collect()
}

/// Enumerate every question template for a task at a given table shape.
/// For numeric tasks `columns` is the number of numeric columns; templates
/// spell out column letters only when more than one column is present.
pub fn enumerate_templates(cfg: &GrammarConfig, columns: usize) -> Result<Vec<QuestionTemplate>> {
    cfg.validate()?;
    match cfg.task {
        TaskKind::Single => {
            if columns != 1 {
                return Err(Error::InvalidConfig(
                    "single-column task enumerates exactly one column".into(),
                ));
            }
            Ok(enumerate_numeric(&OpWords::base(), 1))
        }
        TaskKind::Multi => {
            if columns == 0 || columns > cfg.max_columns {
                return Err(Error::InvalidConfig(format!(
                    "columns {columns} outside 1..={}",
                    cfg.max_columns
                )));
            }
            Ok(enumerate_numeric(&OpWords::base(), columns))
        }
        TaskKind::Variability => {
            if columns == 0 || columns > cfg.max_columns {
                return Err(Error::InvalidConfig(format!(
                    "columns {columns} outside 1..={}",
                    cfg.max_columns
                )));
            }
            Ok(enumerate_numeric(&OpWords::variability(), columns))
        }
        TaskKind::TextMatch => {
            let (t, n) = cfg.test_shape();
            if columns != t + n {
                return Err(Error::InvalidConfig(format!(
                    "text-match enumeration expects {} columns",
                    t + n
                )));
            }
            enumerate_text_match(t, n)
        }
    }
}

/// Templates for tables with `text` leading text columns and `numeric`
/// numeric columns: every `[word] <text col> sum <numeric col>` pattern.
pub fn enumerate_text_match(text: usize, numeric: usize) -> Result<Vec<QuestionTemplate>> {
    if text == 0 || numeric == 0 || text + numeric > 10 {
        return Err(Error::InvalidConfig(format!(
            "unsupported text-match shape {text}+{numeric}"
        )));
    }
    let mut b = Builder {
        templates: Vec::new(),
        text_columns: text,
        numeric_columns: numeric,
    };
    for word in text_cell_vocabulary() {
        for tc in 0..text {
            for nc in 0..numeric {
                let tname = COLUMN_LETTERS[tc];
                let nname = COLUMN_LETTERS[text + nc];
                let tokens = vec![
                    TemplateTok::Word(word.clone()),
                    TemplateTok::Word(tname.to_string()),
                    TemplateTok::Word("sum".to_string()),
                    TemplateTok::Word(nname.to_string()),
                ];
                let program = vec![
                    GoldStep::on(OpKind::TextMatch, tname),
                    GoldStep::on(OpKind::Sum, nname),
                ];
                b.push(tokens, program, AnswerKind::Scalar, Category::TextMatch);
            }
        }
    }
    Ok(b.templates)
}

fn enumerate_numeric(w: &OpWords, columns: usize) -> Vec<QuestionTemplate> {
    let letters: Vec<&str> = COLUMN_LETTERS[..columns].to_vec();
    let spell = columns > 1;
    let col_tok = |name: &str| TemplateTok::Word(name.to_string());
    // Column choices: with one column the letter is implicit.
    let col_choices: Vec<Option<&str>> = if spell {
        letters.iter().map(|l| Some(*l)).collect()
    } else {
        vec![Some(letters[0])]
    };

    let mut b = Builder {
        templates: Vec::new(),
        text_columns: 0,
        numeric_columns: columns,
    };

    let aggs = [Agg::Sum, Agg::Count, Agg::Print];

    // Aggregation: "sum", "count", "print" (plus a column letter each when
    // several columns exist).
    for agg in aggs {
        for aw in agg.words(w) {
            if agg.takes_column() {
                for col in &col_choices {
                    let mut tokens = words_of(aw);
                    if spell {
                        tokens.push(col_tok(col.unwrap()));
                    }
                    b.push(
                        tokens,
                        vec![agg.step(*col)],
                        agg.answer_kind(),
                        Category::Aggregation,
                    );
                }
            } else {
                b.push(
                    words_of(aw),
                    vec![agg.step(None)],
                    agg.answer_kind(),
                    Category::Aggregation,
                );
            }
        }
    }

    // Comparison: "greater [number] sum" and friends.
    for (cmp_op, cmp_words) in [(OpKind::Greater, &w.greater), (OpKind::Lesser, &w.lesser)] {
        for cw in cmp_words {
            for cmp_col in &col_choices {
                for agg in aggs {
                    for aw in agg.words(w) {
                        let agg_cols: Vec<Option<&str>> = if agg.takes_column() {
                            col_choices.clone()
                        } else {
                            vec![None]
                        };
                        for agg_col in agg_cols {
                            let mut tokens = words_of(cw);
                            tokens.push(TemplateTok::Number(0));
                            if spell {
                                tokens.push(col_tok(cmp_col.unwrap()));
                            }
                            tokens.extend(words_of(aw));
                            if spell && agg.takes_column() {
                                tokens.push(col_tok(agg_col.unwrap()));
                            }
                            let program = vec![
                                GoldStep::on(cmp_op, cmp_col.unwrap()),
                                agg.step(agg_col),
                            ];
                            b.push(tokens, program, agg.answer_kind(), Category::Comparison);
                        }
                    }
                }
            }
        }
    }

    // Logic: two comparisons joined by "and"/"or".
    for (first_op, first_words, second_op, second_words) in [
        (OpKind::Greater, &w.greater, OpKind::Lesser, &w.lesser),
        (OpKind::Lesser, &w.lesser, OpKind::Greater, &w.greater),
    ] {
        for conn in ["and", "or"] {
            let conn_op = if conn == "and" { OpKind::And } else { OpKind::Or };
            for fw in first_words {
                for sw in second_words {
                    for first_col in &col_choices {
                        for second_col in &col_choices {
                            for agg in aggs {
                                for aw in agg.words(w) {
                                    let agg_cols: Vec<Option<&str>> = if agg.takes_column() {
                                        col_choices.clone()
                                    } else {
                                        vec![None]
                                    };
                                    for agg_col in agg_cols {
                                        let mut tokens = words_of(fw);
                                        tokens.push(TemplateTok::Number(0));
                                        if spell {
                                            tokens.push(col_tok(first_col.unwrap()));
                                        }
                                        tokens.push(TemplateTok::Word(conn.to_string()));
                                        tokens.extend(words_of(sw));
                                        tokens.push(TemplateTok::Number(1));
                                        if spell {
                                            tokens.push(col_tok(second_col.unwrap()));
                                        }
                                        tokens.extend(words_of(aw));
                                        if spell && agg.takes_column() {
                                            tokens.push(col_tok(agg_col.unwrap()));
                                        }
                                        let program = vec![
                                            GoldStep::on(first_op, first_col.unwrap()),
                                            GoldStep::on(second_op, second_col.unwrap()),
                                            GoldStep::new(conn_op),
                                            agg.step(agg_col),
                                        ];
                                        b.push(
                                            tokens,
                                            program,
                                            agg.answer_kind(),
                                            Category::Logic,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Arithmetic: "sum diff count" and "count diff sum".
    for dw in &w.diff {
        for sw in &w.sum {
            for cw in &w.count {
                for col in &col_choices {
                    // sum X diff count
                    let mut tokens = words_of(sw);
                    if spell {
                        tokens.push(col_tok(col.unwrap()));
                    }
                    tokens.extend(words_of(dw));
                    tokens.extend(words_of(cw));
                    let program = vec![
                        GoldStep::on(OpKind::Sum, col.unwrap()),
                        GoldStep::new(OpKind::Reset),
                        GoldStep::new(OpKind::Count),
                        GoldStep::new(OpKind::Difference),
                    ];
                    b.push(tokens, program, AnswerKind::Scalar, Category::Arithmetic);

                    // count diff sum X
                    let mut tokens = words_of(cw);
                    tokens.extend(words_of(dw));
                    tokens.extend(words_of(sw));
                    if spell {
                        tokens.push(col_tok(col.unwrap()));
                    }
                    let program = vec![
                        GoldStep::new(OpKind::Count),
                        GoldStep::new(OpKind::Reset),
                        GoldStep::on(OpKind::Sum, col.unwrap()),
                        GoldStep::new(OpKind::Difference),
                    ];
                    b.push(tokens, program, AnswerKind::Scalar, Category::Arithmetic);
                }
            }
        }
    }

    b.templates
}

/// Every token any task can produce: operation words and synonyms, the
/// connectives, column letters and the text-cell vocabulary.
pub fn grammar_vocabulary() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let var = OpWords::variability();
    for set in [var.sum, var.count, var.print, var.greater, var.lesser, var.diff] {
        for phrase in set {
            out.extend(phrase);
        }
    }
    out.push("diff".to_string());
    out.push("and".to_string());
    out.push("or".to_string());
    out.extend(COLUMN_LETTERS.iter().map(|s| s.to_string()));
    out.extend(text_cell_vocabulary());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(task: TaskKind, max_columns: usize) -> GrammarConfig {
        GrammarConfig { task, max_columns }
    }

    #[test]
    fn single_column_has_23_templates() {
        let t = enumerate_templates(&cfg(TaskKind::Single, 1), 1).unwrap();
        assert_eq!(t.len(), 23);
        // categories: 3 aggregation, 6 comparison, 12 logic, 2 arithmetic
        let count = |c: Category| t.iter().filter(|x| x.category == c).count();
        assert_eq!(count(Category::Aggregation), 3);
        assert_eq!(count(Category::Comparison), 6);
        assert_eq!(count(Category::Logic), 12);
        assert_eq!(count(Category::Arithmetic), 2);
    }

    #[test]
    fn two_columns_greater_and_lesser_sum_has_8_templates() {
        let t = enumerate_templates(&cfg(TaskKind::Multi, 2), 2).unwrap();
        let sub: Vec<_> = t
            .iter()
            .filter(|x| {
                x.program[0].op == OpKind::Greater
                    && x.program[1].op == OpKind::Lesser
                    && x.program[2].op == OpKind::And
                    && x.program[3].op == OpKind::Sum
            })
            .collect();
        assert_eq!(sub.len(), 8);
    }

    #[test]
    fn multi_column_totals_match_closed_form() {
        // 8c^3 + 8c^2 + 6c + 1, which gives 307 at c=3 and 1231 at c=5
        for (c, expect) in [(3usize, 307usize), (5, 1231)] {
            let t = enumerate_templates(&cfg(TaskKind::Multi, c), c).unwrap();
            assert_eq!(t.len(), expect, "columns {c}");
        }
    }

    #[test]
    fn variability_greater_number_sum_has_24_templates() {
        let t = enumerate_templates(&cfg(TaskKind::Variability, 1), 1).unwrap();
        let sub: Vec<_> = t
            .iter()
            .filter(|x| {
                x.category == Category::Comparison
                    && x.program[2].op == OpKind::Greater
                    && x.program[3].op == OpKind::Sum
            })
            .collect();
        assert_eq!(sub.len(), 24);
    }

    #[test]
    fn variability_single_column_total() {
        let t = enumerate_templates(&cfg(TaskKind::Variability, 1), 1).unwrap();
        assert_eq!(t.len(), 1368);
    }

    #[test]
    fn text_match_two_columns_has_10_templates() {
        let t = enumerate_templates(&cfg(TaskKind::TextMatch, 2), 2).unwrap();
        assert_eq!(t.len(), 10);
        for tpl in &t {
            assert_eq!(tpl.program[2].op, OpKind::TextMatch);
            assert_eq!(tpl.program[3].op, OpKind::Sum);
        }
    }

    #[test]
    fn template_ids_are_unique() {
        for (task, c) in [
            (TaskKind::Single, 1),
            (TaskKind::Multi, 3),
            (TaskKind::Variability, 1),
            (TaskKind::TextMatch, 2),
        ] {
            let t = enumerate_templates(&cfg(task, c), c).unwrap();
            let mut ids: Vec<_> = t.iter().map(|x| x.id.clone()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), t.len(), "{task:?}");
        }
    }

    #[test]
    fn unsupported_combinations_error() {
        assert!(enumerate_templates(&cfg(TaskKind::Single, 2), 2).is_err());
        assert!(enumerate_templates(&cfg(TaskKind::TextMatch, 3), 3).is_err());
        assert!(enumerate_templates(&cfg(TaskKind::Multi, 11), 11).is_err());
    }

    #[test]
    fn programs_are_padded_to_four_steps() {
        let t = enumerate_templates(&cfg(TaskKind::Single, 1), 1).unwrap();
        for tpl in &t {
            assert_eq!(tpl.program.len(), PROGRAM_STEPS, "{}", tpl.id);
        }
        let sum = t.iter().find(|x| x.id == "sum").unwrap();
        assert_eq!(sum.program[0].op, OpKind::Reset);
        assert_eq!(sum.program[3].op, OpKind::Sum);
    }
}
