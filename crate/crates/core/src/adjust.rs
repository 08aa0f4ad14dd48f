//! Rating-adjustment conditions applied to model scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rating::{RatingRecord, Score, SentimentRating};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// No adjustment.
    C1,
    /// Scores of 4 or above lose one point.
    C2,
    /// Scores of 2 or below gain one point.
    C3,
    /// Both C2 and C3, each tested against the original score.
    C4,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::C1, Condition::C2, Condition::C3, Condition::C4];

    pub fn apply(self, score: Score) -> Score {
        let s = score.get();
        let shifted = match self {
            Condition::C1 => s,
            Condition::C2 if s >= 4 => s - 1,
            Condition::C3 if s <= 2 => s + 1,
            Condition::C4 if s >= 4 => s - 1,
            Condition::C4 if s <= 2 => s + 1,
            _ => s,
        };
        Score::new(shifted).expect("adjustments stay within 1..=5")
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn name(self) -> String {
        format!("Condition {}", self.number())
    }
}

/// Free-function form of [`Condition::apply`].
pub fn apply_condition(score: Score, condition: Condition) -> Score {
    condition.apply(score)
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.number())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" | "1" => Ok(Condition::C1),
            "C2" | "2" => Ok(Condition::C2),
            "C3" | "3" => Ok(Condition::C3),
            "C4" | "4" => Ok(Condition::C4),
            other => Err(format!("unknown condition `{other}` (expected C1..C4)")),
        }
    }
}

/// Parses a comma-separated list such as `C1,C2,C4`.
pub fn parse_condition_list(s: &str) -> Result<Vec<Condition>, String> {
    let mut out: Vec<Condition> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// A model rating after adjustment, as written by `adjust`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustedRating {
    #[serde(flatten)]
    pub rating: SentimentRating,
    pub condition: Condition,
    pub original_score: Score,
}

/// Adjusts every rated record; failures pass through unchanged.
pub fn adjust_records(records: &[RatingRecord], condition: Condition) -> Vec<Result<AdjustedRating, RatingRecord>> {
    records
        .iter()
        .map(|rec| match rec {
            RatingRecord::Rated(r) => {
                let mut rating = r.clone();
                rating.score = condition.apply(r.score);
                Ok(AdjustedRating {
                    rating,
                    condition,
                    original_score: r.score,
                })
            }
            failed => Err(failed.clone()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: u8) -> Score {
        Score::new(v).unwrap()
    }

    #[test]
    fn named_cases() {
        assert_eq!(Condition::C2.apply(s(4)), s(3));
        assert_eq!(Condition::C4.apply(s(3)), s(3));
        assert_eq!(Condition::C3.apply(s(2)), s(3));
        // C4 looks at the original score only: a 2 becomes 3 and stays there.
        assert_eq!(Condition::C4.apply(s(2)), s(3));
        assert_eq!(Condition::C4.apply(s(5)), s(4));
    }

    #[test]
    fn truth_table() {
        // rows: score 1..5; columns: C1..C4, written out from the two rules
        let expected = [[1, 1, 2, 2], [2, 2, 3, 3], [3, 3, 3, 3], [4, 3, 4, 3], [5, 4, 5, 4]];
        for (i, row) in expected.iter().enumerate() {
            for (c, want) in Condition::ALL.iter().zip(row) {
                assert_eq!(c.apply(s(i as u8 + 1)).get(), *want, "score {} {c}", i + 1);
            }
        }
    }

    #[test]
    fn monotone_and_composed() {
        for c in Condition::ALL {
            for a in Score::all() {
                for b in Score::all().filter(|b| *b >= a) {
                    assert!(c.apply(a) <= c.apply(b));
                }
            }
        }
        for v in Score::all() {
            let expect = if v.get() >= 3 { Condition::C2.apply(v) } else { Condition::C3.apply(v) };
            assert_eq!(Condition::C4.apply(v), expect);
        }
    }

    #[test]
    fn parse_lists() {
        assert_eq!(
            parse_condition_list("C4, c1,C2,C1").unwrap(),
            vec![Condition::C1, Condition::C2, Condition::C4]
        );
        assert!(parse_condition_list("C5").is_err());
        assert_eq!("C3".parse::<Condition>().unwrap().to_string(), "C3");
    }
}
