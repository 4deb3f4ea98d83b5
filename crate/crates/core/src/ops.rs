//! The built-in table operations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the built-in operations the controller can select at a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Sum,
    Count,
    Difference,
    Greater,
    Lesser,
    And,
    Or,
    Assign,
    Reset,
    TextMatch,
}

impl OpKind {
    /// True for operations that act on a particular column.
    pub fn takes_column(self) -> bool {
        matches!(
            self,
            OpKind::Sum | OpKind::Greater | OpKind::Lesser | OpKind::Assign | OpKind::TextMatch
        )
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpKind::Sum => "Sum",
            OpKind::Count => "Count",
            OpKind::Difference => "Diff",
            OpKind::Greater => "Greater",
            OpKind::Lesser => "Lesser",
            OpKind::And => "And",
            OpKind::Or => "Or",
            OpKind::Assign => "Assign",
            OpKind::Reset => "Reset",
            OpKind::TextMatch => "TextMatch",
        };
        f.write_str(s)
    }
}
