use serde::{Deserialize, Serialize};

/// Outcome of checking one inequality or bound.
///
/// `slack` is oriented so that non-negative means the statement holds:
/// `rhs - lhs` for upper bounds, `lhs - rhs` for lower bounds and `-|lhs - rhs|`
/// for equalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub hypothesis_ok: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl VerdictRecord {
    fn build(statement: impl Into<String>, lhs: f64, rhs: f64, slack: f64, tol: f64) -> Self {
        VerdictRecord {
            statement: statement.into(),
            lhs,
            rhs,
            slack,
            pass: slack >= -tol,
            hypothesis_ok: true,
            notes: Vec::new(),
        }
    }

    /// `lhs <= rhs`.
    pub fn upper(statement: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(statement, lhs, rhs, rhs - lhs, tol)
    }

    /// `lhs >= rhs`.
    pub fn lower(statement: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(statement, lhs, rhs, lhs - rhs, tol)
    }

    /// `lhs == rhs`.
    pub fn equality(statement: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(statement, lhs, rhs, -(lhs - rhs).abs(), tol)
    }

    /// Marks the hypothesis as failed; such a record never passes.
    pub fn with_hypothesis(mut self, ok: bool) -> Self {
        self.hypothesis_ok = ok;
        if !ok {
            self.pass = false;
        }
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation() {
        assert_eq!(VerdictRecord::upper("u", 1.0, 2.0, 0.0).slack, 1.0);
        assert_eq!(VerdictRecord::lower("l", 4.0, 4.0, 0.0).slack, 0.0);
        assert!(!VerdictRecord::lower("l", 3.0, 4.0, 0.0).pass);
        assert!(!VerdictRecord::upper("u", 1.0, 2.0, 0.0).with_hypothesis(false).pass);
    }
}
