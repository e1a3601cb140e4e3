//! Surface syntax for mission formulas.
//!
//! ```text
//! formula  := term { "and" term }
//! term     := "true"
//!           | "F[" num "," num "](" formula ")"
//!           | "G[" num "," num "](" formula ")"
//!           | "U[" num "," num "](" formula "," formula ")"
//!           | "not" pred
//!           | pred
//!           | "(" formula ")"
//! pred     := "ball(r0, [" num "," num "," num "])" "<=" num
//!           | "box(r0," num ")"                      -- side-2S cuboid at the origin
//! ```
//!
//! Whitespace is free between tokens; keywords are case sensitive. The
//! fragment rules (no nested temporal operators, negation on predicates only,
//! well-formed intervals) are enforced during parsing, so a returned formula
//! is always valid.

use thiserror::Error;

use super::{Formula, FragmentError, NormKind, Predicate, TimeInterval};
use crate::rigid_body::Vec3;

#[derive(Debug, Error, PartialEq)]
#[error("parse error at offset {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

/// Parses a mission formula from its surface syntax.
pub fn parse_spec(input: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { input, pos: 0 };
    let formula = p.formula()?;
    p.skip_ws();
    if p.pos != p.input.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(formula)
}

struct Parser<'a> {
    input: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            pos: self.pos,
            message: message.into(),
        }
    }

    fn fragment_error(&self, at: usize, err: FragmentError) -> ParseError {
        ParseError {
            pos: at,
            message: err.to_string(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.input[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.input.len() - trimmed.len();
    }

    /// Consumes a literal token (after skipping whitespace).
    fn expect(&mut self, token: &str) -> Result<(), ParseError> {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.error(format!("expected `{token}`")))
        }
    }

    /// Consumes a keyword: like `expect`, but the next character must not
    /// continue an identifier (so `and` does not match `android`).
    fn keyword(&mut self, word: &str) -> bool {
        self.skip_ws();
        if !self.rest().starts_with(word) {
            return false;
        }
        let boundary = self.rest()[word.len()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_ascii_alphanumeric() && c != '_');
        if boundary {
            self.pos += word.len();
        }
        boundary
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let mut len = 0;
        let bytes = rest.as_bytes();
        if len < bytes.len() && (bytes[len] == b'+' || bytes[len] == b'-') {
            len += 1;
        }
        let digits_start = len;
        while len < bytes.len() && (bytes[len].is_ascii_digit() || bytes[len] == b'.') {
            len += 1;
        }
        if len < bytes.len() && (bytes[len] == b'e' || bytes[len] == b'E') {
            len += 1;
            if len < bytes.len() && (bytes[len] == b'+' || bytes[len] == b'-') {
                len += 1;
            }
            while len < bytes.len() && bytes[len].is_ascii_digit() {
                len += 1;
            }
        }
        if len == digits_start {
            return Err(self.error("expected a number"));
        }
        match rest[..len].parse::<f64>() {
            Ok(x) if x.is_finite() => {
                self.pos += len;
                Ok(x)
            }
            _ => Err(self.error(format!("invalid number `{}`", &rest[..len]))),
        }
    }

    fn interval(&mut self) -> Result<TimeInterval, ParseError> {
        let at = self.pos;
        self.expect("[")?;
        let start = self.number()?;
        self.expect(",")?;
        let end = self.number()?;
        self.expect("]")?;
        TimeInterval::new(start, end).map_err(|e| self.fragment_error(at, e))
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.term()?;
        while self.keyword("and") {
            let rhs = self.term()?;
            acc = Formula::and(acc, rhs);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Formula, ParseError> {
        self.skip_ws();
        let at = self.pos;
        let rest = self.rest();
        if rest.starts_with("F[") {
            self.pos += 1;
            let interval = self.interval()?;
            self.expect("(")?;
            let inner = self.formula()?;
            self.expect(")")?;
            return Formula::eventually(interval, inner).map_err(|e| self.fragment_error(at, e));
        }
        if rest.starts_with("G[") {
            self.pos += 1;
            let interval = self.interval()?;
            self.expect("(")?;
            let inner = self.formula()?;
            self.expect(")")?;
            return Formula::always(interval, inner).map_err(|e| self.fragment_error(at, e));
        }
        if rest.starts_with("U[") {
            self.pos += 1;
            let interval = self.interval()?;
            self.expect("(")?;
            let lhs = self.formula()?;
            self.expect(",")?;
            let rhs = self.formula()?;
            self.expect(")")?;
            return Formula::until(interval, lhs, rhs).map_err(|e| self.fragment_error(at, e));
        }
        if self.keyword("true") {
            return Ok(Formula::True);
        }
        if self.keyword("not") {
            return Ok(Formula::Not(self.predicate()?));
        }
        if rest.starts_with("ball") || rest.starts_with("box") {
            return Ok(Formula::Pred(self.predicate()?));
        }
        if rest.starts_with('(') {
            self.pos += 1;
            let inner = self.formula()?;
            self.expect(")")?;
            return Ok(inner);
        }
        Err(self.error(
            "expected a formula (`true`, `F[..](..)`, `G[..](..)`, `U[..](..,..)`, \
             `not`, `ball(..)`, `box(..)`, or `(`)",
        ))
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        self.skip_ws();
        if self.rest().starts_with("ball") {
            self.pos += "ball".len();
            self.expect("(")?;
            self.expect("r0")?;
            self.expect(",")?;
            self.expect("[")?;
            let x = self.number()?;
            self.expect(",")?;
            let y = self.number()?;
            self.expect(",")?;
            let z = self.number()?;
            self.expect("]")?;
            self.expect(")")?;
            self.expect("<=")?;
            let at = self.pos;
            let radius = self.number()?;
            if radius < 0.0 {
                return Err(ParseError {
                    pos: at,
                    message: format!("ball radius must be non-negative, got {radius}"),
                });
            }
            return Ok(Predicate::NormBall {
                center: Vec3::new(x, y, z),
                radius,
                norm: NormKind::Euclidean,
            });
        }
        if self.rest().starts_with("box") {
            self.pos += "box".len();
            self.expect("(")?;
            self.expect("r0")?;
            self.expect(",")?;
            let at = self.pos;
            let half_side = self.number()?;
            if half_side < 0.0 {
                return Err(ParseError {
                    pos: at,
                    message: format!("box half-side must be non-negative, got {half_side}"),
                });
            }
            self.expect(")")?;
            return Ok(Predicate::NormBall {
                center: Vec3::zeros(),
                radius: half_side,
                norm: NormKind::Infinity,
            });
        }
        Err(self.error("expected a predicate (`ball(..)` or `box(..)`)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(center: [f64; 3], radius: f64) -> Predicate {
        Predicate::NormBall {
            center: Vec3::new(center[0], center[1], center[2]),
            radius,
            norm: NormKind::Euclidean,
        }
    }

    #[test]
    fn parses_true() {
        assert_eq!(parse_spec("true").unwrap(), Formula::True);
    }

    #[test]
    fn parses_reach_and_hold_pair() {
        let f = parse_spec(
            "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and G[14, 25](ball(r0, [2, 2, 2]) <= 3)",
        )
        .unwrap();
        let expect = Formula::and(
            Formula::eventually(
                TimeInterval::new(0.0, 14.0).unwrap(),
                Formula::Pred(ball([2.0, 2.0, 2.0], 0.1)),
            )
            .unwrap(),
            Formula::always(
                TimeInterval::new(14.0, 25.0).unwrap(),
                Formula::Pred(ball([2.0, 2.0, 2.0], 3.0)),
            )
            .unwrap(),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn parses_box_as_infinity_ball() {
        let f = parse_spec("G[0, 90](box(r0, 50))").unwrap();
        match f {
            Formula::Always { interval, inner } => {
                assert_eq!(interval, TimeInterval::new(0.0, 90.0).unwrap());
                assert_eq!(
                    *inner,
                    Formula::Pred(Predicate::NormBall {
                        center: Vec3::zeros(),
                        radius: 50.0,
                        norm: NormKind::Infinity,
                    })
                );
            }
            other => panic!("expected Always, got {other:?}"),
        }
    }

    #[test]
    fn parses_until_and_negation() {
        let f = parse_spec("U[2, 5](not ball(r0, [0, 0, 0]) <= 1, box(r0, 3))").unwrap();
        match &f {
            Formula::Until { interval, lhs, rhs } => {
                assert_eq!(*interval, TimeInterval::new(2.0, 5.0).unwrap());
                assert!(matches!(**lhs, Formula::Not(_)));
                assert!(matches!(**rhs, Formula::Pred(_)));
            }
            other => panic!("expected Until, got {other:?}"),
        }
        assert_eq!(f.horizon(), 5.0);
    }

    #[test]
    fn tolerates_irregular_whitespace() {
        let f = parse_spec("  F[ 0 , 18 ] ( ball( r0 , [ 10, 10, 5 ] ) <= 1.0 )  ").unwrap();
        assert!(matches!(f, Formula::Eventually { .. }));
    }

    #[test]
    fn rejects_backwards_interval() {
        let err = parse_spec("F[2, 1](true)").unwrap_err();
        assert!(err.message.contains("interval"), "{err}");
    }

    #[test]
    fn rejects_negative_start() {
        assert!(parse_spec("G[-1, 5](true)").is_err());
    }

    #[test]
    fn rejects_nested_temporal() {
        let err = parse_spec("G[0, 5](F[0, 1](ball(r0, [0, 0, 0]) <= 1))").unwrap_err();
        assert!(err.message.contains("nested"), "{err}");
    }

    #[test]
    fn rejects_negated_temporal() {
        // `not` only accepts a predicate, so a temporal operand is a syntax error.
        assert!(parse_spec("not G[0, 1](true)").is_err());
    }

    #[test]
    fn rejects_trailing_garbage() {
        let err = parse_spec("true and true blah").unwrap_err();
        assert!(err.message.contains("trailing"), "{err}");
    }

    #[test]
    fn rejects_malformed_vector() {
        assert!(parse_spec("ball(r0, [1, 2]) <= 1").is_err());
        assert!(parse_spec("ball(r0, [1, 2, 3]) <= -1").is_err());
    }

    #[test]
    fn error_carries_position() {
        let err = parse_spec("F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and ???").unwrap_err();
        assert!(
            err.pos >= 41,
            "position {} should point at the garbage",
            err.pos
        );
    }

    #[test]
    fn display_round_trips() {
        let texts = [
            "true",
            "F[0, 18](ball(r0, [10, 10, 5]) <= 1)",
            "G[0, 90](box(r0, 50))",
            "F[0, 14](ball(r0, [2, 2, 2]) <= 0.1) and G[14, 25](ball(r0, [2, 2, 2]) <= 3)",
            "U[2, 5](not ball(r0, [0, 0, 0]) <= 1, true)",
            "G[17, 30](ball(r0, [10, 10, 5]) <= 1) and G[0, 90](box(r0, 50)) and true",
        ];
        for text in texts {
            let f = parse_spec(text).unwrap();
            let round = parse_spec(&f.to_string()).unwrap();
            assert_eq!(f, round, "display `{f}` failed to round-trip");
        }
    }
}
