//! Discrete reference interpreter for gold programs.
//!
//! Executes a program with one-hot selections: comparisons produce {0,1}
//! row masks, and/or are min/max, sum/count/difference update the scalar
//! and assign emits the lookup mask. The differentiable interpreter must
//! agree with this oracle whenever its selections are forced one-hot.

use crate::dataset::templates::PROGRAM_STEPS;
use crate::dataset::{Answer, ColumnValues, GoldStep, TableInstance};
use crate::error::{Error, Result};
use crate::ops::OpKind;

/// Run a gold program against a table. Comparison pivots are consumed from
/// `numbers` in program order; text-match query words from `words`.
pub fn execute_hard_program(
    program: &[GoldStep],
    table: &TableInstance,
    numbers: &[f64],
    words: &[String],
) -> Result<Answer> {
    if program.len() > PROGRAM_STEPS {
        return Err(Error::InvalidConfig(format!(
            "program has {} steps, at most {PROGRAM_STEPS} supported",
            program.len()
        )));
    }
    table.validate()?;
    let m = table.rows;
    let c = table.num_columns();

    let numeric_col = |step: &GoldStep| -> Result<&[f64]> {
        let name = step
            .col
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("{} needs a column", step.op)))?;
        let idx = table
            .col_index(name)
            .ok_or_else(|| Error::InvalidConfig(format!("no column named {name}")))?;
        match &table.columns[idx].values {
            ColumnValues::Numeric(v) => Ok(v),
            ColumnValues::Text(_) => Err(Error::InvalidConfig(format!(
                "{} applied to text column {name}",
                step.op
            ))),
        }
    };

    // row_select for steps <= 0 is all ones; scalar answers are zero there.
    let mut row_selects: Vec<Vec<f64>> = vec![vec![1.0; m]];
    let mut scalars: Vec<f64> = vec![0.0];
    let mut lookup: Vec<Vec<u8>> = vec![vec![0; c]; m];
    let mut numbers_iter = numbers.iter();
    let mut words_iter = words.iter();

    let row_sel_at = |rs: &[Vec<f64>], t: isize| -> Vec<f64> {
        if t <= 0 {
            vec![1.0; m]
        } else {
            rs[t as usize].clone()
        }
    };
    let scalar_at = |sc: &[f64], t: isize| -> f64 {
        if t <= 0 {
            0.0
        } else {
            sc[t as usize]
        }
    };

    for (step_idx, step) in program.iter().enumerate() {
        let t = step_idx as isize + 1;
        let prev = row_sel_at(&row_selects, t - 1);
        let mut scalar_t = 0.0;
        let row_t: Vec<f64> = match step.op {
            OpKind::Sum => {
                let col = numeric_col(step)?;
                scalar_t = prev.iter().zip(col).map(|(r, v)| r * v).sum();
                vec![0.0; m]
            }
            OpKind::Count => {
                scalar_t = prev.iter().sum();
                vec![0.0; m]
            }
            OpKind::Difference => {
                scalar_t = scalar_at(&scalars, t - 3) - scalar_at(&scalars, t - 1);
                vec![0.0; m]
            }
            OpKind::Greater => {
                let pivot = *numbers_iter
                    .next()
                    .ok_or_else(|| Error::InvalidConfig("ran out of pivot numbers".into()))?;
                let col = numeric_col(step)?;
                col.iter().map(|&v| if v > pivot { 1.0 } else { 0.0 }).collect()
            }
            OpKind::Lesser => {
                let pivot = *numbers_iter
                    .next()
                    .ok_or_else(|| Error::InvalidConfig("ran out of pivot numbers".into()))?;
                let col = numeric_col(step)?;
                col.iter().map(|&v| if v < pivot { 1.0 } else { 0.0 }).collect()
            }
            OpKind::And => {
                let back2 = row_sel_at(&row_selects, t - 2);
                prev.iter().zip(&back2).map(|(a, b)| a.min(*b)).collect()
            }
            OpKind::Or => {
                let back2 = row_sel_at(&row_selects, t - 2);
                prev.iter().zip(&back2).map(|(a, b)| a.max(*b)).collect()
            }
            OpKind::Assign => {
                let name = step
                    .col
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("Assign needs a column".into()))?;
                let j = table
                    .col_index(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("no column named {name}")))?;
                lookup = vec![vec![0; c]; m];
                for (i, r) in prev.iter().enumerate() {
                    lookup[i][j] = if *r > 0.0 { 1 } else { 0 };
                }
                vec![0.0; m]
            }
            OpKind::Reset => vec![1.0; m],
            OpKind::TextMatch => {
                let query = words_iter
                    .next()
                    .ok_or_else(|| Error::InvalidConfig("ran out of match words".into()))?;
                let name = step
                    .col
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("TextMatch needs a column".into()))?;
                let idx = table
                    .col_index(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("no column named {name}")))?;
                match &table.columns[idx].values {
                    ColumnValues::Text(v) => v
                        .iter()
                        .map(|w| if w == query { 1.0 } else { 0.0 })
                        .collect(),
                    ColumnValues::Numeric(_) => {
                        return Err(Error::InvalidConfig(format!(
                            "TextMatch applied to numeric column {name}"
                        )))
                    }
                }
            }
        };
        row_selects.push(row_t);
        scalars.push(scalar_t);
    }

    let last = program
        .last()
        .ok_or_else(|| Error::InvalidConfig("empty program".into()))?;
    Ok(match last.op {
        OpKind::Assign => Answer::Lookup { mask: lookup },
        _ => Answer::Scalar {
            scalar: *scalars.last().unwrap(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;

    fn numeric_table(cols: &[(&str, Vec<f64>)]) -> TableInstance {
        TableInstance {
            rows: cols[0].1.len(),
            columns: cols
                .iter()
                .map(|(n, v)| Column {
                    name: n.to_string(),
                    values: ColumnValues::Numeric(v.clone()),
                })
                .collect(),
        }
    }

    #[test]
    fn count_on_30_rows_is_30() {
        let t = numeric_table(&[("A", vec![1.0; 30])]);
        let ans = execute_hard_program(&[GoldStep::new(OpKind::Count)], &t, &[], &[]).unwrap();
        assert_eq!(ans, Answer::Scalar { scalar: 30.0 });
    }

    #[test]
    fn greater_lesser_and_sum_matches_brute_force() {
        // columns C, E, H with distinct values; brute-force row filter oracle
        let c = vec![60.0, 40.0, 55.0, 10.0, 70.0];
        let e = vec![10.0, 15.0, 30.0, 5.0, 19.0];
        let h = vec![1.0, 2.0, 4.0, 8.0, 16.0];
        let t = numeric_table(&[("C", c.clone()), ("E", e.clone()), ("H", h.clone())]);
        let program = [
            GoldStep::on(OpKind::Greater, "C"),
            GoldStep::on(OpKind::Lesser, "E"),
            GoldStep::new(OpKind::And),
            GoldStep::on(OpKind::Sum, "H"),
        ];
        let ans = execute_hard_program(&program, &t, &[50.32, 20.21], &[]).unwrap();

        let brute: f64 = (0..5)
            .filter(|&i| c[i] > 50.32 && e[i] < 20.21)
            .map(|i| h[i])
            .sum();
        assert_eq!(ans, Answer::Scalar { scalar: brute });
        assert_eq!(brute, 1.0 + 16.0); // rows 0 and 4 survive
    }

    #[test]
    fn sum_diff_count_is_sum_minus_rows() {
        let a = vec![3.0, -1.5, 2.25, 9.0];
        let t = numeric_table(&[("A", a.clone())]);
        let program = [
            GoldStep::on(OpKind::Sum, "A"),
            GoldStep::new(OpKind::Reset),
            GoldStep::new(OpKind::Count),
            GoldStep::new(OpKind::Difference),
        ];
        let ans = execute_hard_program(&program, &t, &[], &[]).unwrap();
        let expect = a.iter().sum::<f64>() - a.len() as f64;
        assert_eq!(ans, Answer::Scalar { scalar: expect });
    }

    #[test]
    fn or_print_emits_lookup_mask() {
        let d = vec![-90.0, 0.0, -85.0];
        let b = vec![5.0, 20.0, 1.0];
        let f = vec![7.0, 8.0, 9.0];
        let t = numeric_table(&[("D", d), ("B", b), ("F", f)]);
        let program = [
            GoldStep::on(OpKind::Lesser, "D"),
            GoldStep::on(OpKind::Greater, "B"),
            GoldStep::new(OpKind::Or),
            GoldStep::on(OpKind::Assign, "F"),
        ];
        let ans = execute_hard_program(&program, &t, &[-80.97, 12.57], &[]).unwrap();
        // rows: 0 (D<-80.97), 1 (B>12.57), 2 (D<-80.97)
        assert_eq!(
            ans,
            Answer::Lookup {
                mask: vec![vec![0, 0, 1], vec![0, 0, 1], vec![0, 0, 1]]
            }
        );
    }

    #[test]
    fn text_match_selects_equal_cells() {
        let t = TableInstance {
            rows: 4,
            columns: vec![
                Column {
                    name: "A".into(),
                    values: ColumnValues::Text(vec![
                        "word:1".into(),
                        "word:2".into(),
                        "word:1".into(),
                        "word:3".into(),
                    ]),
                },
                Column {
                    name: "B".into(),
                    values: ColumnValues::Numeric(vec![1.0, 2.0, 4.0, 8.0]),
                },
            ],
        };
        let program = [
            GoldStep::on(OpKind::TextMatch, "A"),
            GoldStep::on(OpKind::Sum, "B"),
        ];
        let ans =
            execute_hard_program(&program, &t, &[], &["word:1".to_string()]).unwrap();
        assert_eq!(ans, Answer::Scalar { scalar: 5.0 });
    }

    #[test]
    fn numeric_op_on_text_column_errors() {
        let t = TableInstance {
            rows: 1,
            columns: vec![Column {
                name: "A".into(),
                values: ColumnValues::Text(vec!["word:0".into()]),
            }],
        };
        assert!(execute_hard_program(&[GoldStep::on(OpKind::Sum, "A")], &t, &[], &[]).is_err());
    }
}
