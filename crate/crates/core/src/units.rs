// Copyright 2026 The SD Toolkit Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Unit expressions: products and quotients of named base atoms with integer
//! exponents. `dimensionless` is the empty product and the multiplicative
//! identity.

use std::collections::BTreeMap;
use std::fmt;

/// The base atom used for time; flows attached to a stock are expected to
/// carry `stock units / year`.
pub const TIME_UNIT: &str = "year";

/// A commutative product of unit atoms, e.g. `people/year` or
/// `points/people/year`. Atoms with exponent zero are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct UnitExpr {
    atoms: BTreeMap<String, i32>,
}

impl UnitExpr {
    pub fn dimensionless() -> Self {
        UnitExpr::default()
    }

    /// A single base atom with exponent 1. The atom `dimensionless` is the
    /// identity, not a stored atom.
    pub fn atom(name: &str) -> Self {
        let mut u = UnitExpr::default();
        if name != "dimensionless" {
            u.atoms.insert(name.to_string(), 1);
        }
        u
    }

    pub fn is_dimensionless(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn multiply(&self, other: &UnitExpr) -> UnitExpr {
        let mut atoms = self.atoms.clone();
        for (name, exp) in &other.atoms {
            let e = atoms.entry(name.clone()).or_insert(0);
            *e += exp;
            if *e == 0 {
                atoms.remove(name);
            }
        }
        UnitExpr { atoms }
    }

    pub fn divide(&self, other: &UnitExpr) -> UnitExpr {
        self.multiply(&other.invert())
    }

    pub fn invert(&self) -> UnitExpr {
        UnitExpr {
            atoms: self.atoms.iter().map(|(n, e)| (n.clone(), -e)).collect(),
        }
    }

    pub fn pow(&self, k: i32) -> UnitExpr {
        if k == 0 {
            return UnitExpr::default();
        }
        UnitExpr {
            atoms: self.atoms.iter().map(|(n, e)| (n.clone(), e * k)).collect(),
        }
    }

    /// `self / year`: what a flow into a stock of these units must carry.
    pub fn per_time(&self) -> UnitExpr {
        self.divide(&UnitExpr::atom(TIME_UNIT))
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&str, i32)> {
        self.atoms.iter().map(|(n, e)| (n.as_str(), *e))
    }
}

impl fmt::Display for UnitExpr {
    /// Canonical form: positive-exponent atoms joined by `*`, then one `/`
    /// segment per negative exponent, alphabetical within each group.
    /// A purely negative unit leads with `dimensionless`, e.g.
    /// `dimensionless/year`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "dimensionless");
        }
        let mut numer = String::new();
        let mut denom = String::new();
        for (name, exp) in &self.atoms {
            if *exp > 0 {
                if !numer.is_empty() {
                    numer.push('*');
                }
                numer.push_str(name);
                if *exp > 1 {
                    numer.push_str(&format!("^{}", exp));
                }
            } else {
                denom.push('/');
                denom.push_str(name);
                if *exp < -1 {
                    denom.push_str(&format!("^{}", -exp));
                }
            }
        }
        if numer.is_empty() {
            numer.push_str("dimensionless");
        }
        write!(f, "{}{}", numer, denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensionless_is_identity() {
        let u = UnitExpr::atom("people").divide(&UnitExpr::atom("year"));
        assert_eq!(u.multiply(&UnitExpr::dimensionless()), u);
        assert_eq!(u.divide(&u), UnitExpr::dimensionless());
    }

    #[test]
    fn algebra_is_commutative() {
        let a = UnitExpr::atom("points");
        let b = UnitExpr::atom("people").invert();
        assert_eq!(a.multiply(&b), b.multiply(&a));
    }

    #[test]
    fn display_canonical_forms() {
        let per_year = UnitExpr::atom("people").per_time();
        assert_eq!(per_year.to_string(), "people/year");

        let score = UnitExpr::atom("points").divide(&UnitExpr::atom("people"));
        assert_eq!(score.per_time().to_string(), "points/people/year");

        assert_eq!(UnitExpr::dimensionless().to_string(), "dimensionless");
        assert_eq!(
            UnitExpr::atom("year").invert().to_string(),
            "dimensionless/year"
        );

        let sq = UnitExpr::atom("year").pow(2);
        assert_eq!(sq.to_string(), "year^2");
        assert_eq!(sq.invert().to_string(), "dimensionless/year^2");
    }

    #[test]
    fn pow_zero_is_dimensionless() {
        assert!(UnitExpr::atom("people").pow(0).is_dimensionless());
    }
}
