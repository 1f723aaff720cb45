use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbeddingTable;

/// A single surface normalization step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Exact,
    Lowercase,
}

impl Normalization {
    pub fn apply<'a>(self, token: &'a str) -> Cow<'a, str> {
        match self {
            Normalization::Exact => Cow::Borrowed(token),
            Normalization::Lowercase => {
                if token.chars().any(char::is_uppercase) {
                    Cow::Owned(token.to_lowercase())
                } else {
                    Cow::Borrowed(token)
                }
            }
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Exact => "exact",
            Normalization::Lowercase => "lowercase",
        })
    }
}

/// Which chain step produced a lookup hit.
pub type MatchKind = Normalization;

/// Ordered chain of normalizations tried when matching a token against a
/// vocabulary. Always starts with `Exact` and never repeats a step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LookupPolicy {
    chain: Vec<Normalization>,
}

impl LookupPolicy {
    pub fn new(chain: Vec<Normalization>) -> Result<Self, String> {
        if chain.first() != Some(&Normalization::Exact) {
            return Err("lookup chain must start with `exact`".into());
        }
        for (i, step) in chain.iter().enumerate() {
            if chain[..i].contains(step) {
                return Err(format!("lookup chain repeats `{step}`"));
            }
        }
        Ok(LookupPolicy { chain })
    }

    pub fn exact() -> Self {
        LookupPolicy {
            chain: vec![Normalization::Exact],
        }
    }

    pub fn lowercase_chain() -> Self {
        LookupPolicy {
            chain: vec![Normalization::Exact, Normalization::Lowercase],
        }
    }

    pub fn chain(&self) -> &[Normalization] {
        &self.chain
    }

    /// The coarsest normalization in the chain; used to put dataset types
    /// and neighbor tokens into the same comparison space.
    pub fn key_normalization(&self) -> Normalization {
        *self.chain.last().unwrap()
    }

    /// Row id of the first chain step that matches.
    pub fn resolve(&self, table: &EmbeddingTable, token: &str) -> Option<(usize, MatchKind)> {
        self.chain
            .iter()
            .find_map(|&step| table.row_id(&step.apply(token)).map(|row| (row, step)))
    }

    pub fn lookup<'t>(&self, table: &'t EmbeddingTable, token: &str) -> Option<(&'t [f32], MatchKind)> {
        self.resolve(table, token).map(|(row, kind)| (table.row(row), kind))
    }
}

impl Default for LookupPolicy {
    fn default() -> Self {
        Self::lowercase_chain()
    }
}

impl FromStr for LookupPolicy {
    type Err = String;

    /// Accepts `exact`, `lowercase-chain`, or a comma-separated chain such as
    /// `exact,lowercase`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::exact()),
            "lowercase-chain" => Ok(Self::lowercase_chain()),
            other => {
                let chain = other
                    .split(',')
                    .map(|step| match step.trim() {
                        "exact" => Ok(Normalization::Exact),
                        "lowercase" => Ok(Normalization::Lowercase),
                        bad => Err(format!("unknown normalization step `{bad}`")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::new(chain)
            }
        }
    }
}

impl fmt::Display for LookupPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let steps: Vec<String> = self.chain.iter().map(ToString::to_string).collect();
        f.write_str(&steps.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_rows("t", vec![("the", vec![1.0]), ("Paris", vec![2.0])]).unwrap()
    }

    #[test]
    fn exact_hit() {
        let t = table();
        let (v, kind) = LookupPolicy::exact().lookup(&t, "the").unwrap();
        assert_eq!(v, &[1.0]);
        assert_eq!(kind, Normalization::Exact);
    }

    #[test]
    fn lowercase_fallback() {
        let t = table();
        assert!(LookupPolicy::exact().lookup(&t, "The").is_none());
        let (_, kind) = LookupPolicy::lowercase_chain().lookup(&t, "The").unwrap();
        assert_eq!(kind, Normalization::Lowercase);
        // exact wins when both would match
        let (_, kind) = LookupPolicy::lowercase_chain().lookup(&t, "Paris").unwrap();
        assert_eq!(kind, Normalization::Exact);
    }

    #[test]
    fn absent() {
        let t = table();
        assert!(LookupPolicy::exact().lookup(&t, "xyzzy").is_none());
        assert!(LookupPolicy::lowercase_chain().lookup(&t, "xyzzy").is_none());
    }

    #[test]
    fn chain_validation() {
        assert!(LookupPolicy::new(vec![]).is_err());
        assert!(LookupPolicy::new(vec![Normalization::Lowercase]).is_err());
        assert!(LookupPolicy::new(vec![Normalization::Exact, Normalization::Exact]).is_err());
        assert_eq!(
            "exact,lowercase".parse::<LookupPolicy>().unwrap(),
            LookupPolicy::lowercase_chain()
        );
        assert!("lowercase".parse::<LookupPolicy>().is_err());
    }
}
