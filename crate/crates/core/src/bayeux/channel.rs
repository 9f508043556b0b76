use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ProtocolError;

const SINGLE: &str = "*";
const DEEP: &str = "**";

/// Hierarchical topic name such as `/stock/AAPL`.
///
/// A segment equal to `*` matches exactly one segment of a concrete channel;
/// `**` (only allowed last) matches one or more trailing segments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelName {
    segments: Vec<String>,
}

impl ChannelName {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let malformed = |reason: &str| ProtocolError::MalformedChannel {
            channel: text.to_owned(),
            reason: reason.to_owned(),
        };

        let rest = text
            .strip_prefix('/')
            .ok_or_else(|| malformed("missing leading '/'"))?;
        if rest.is_empty() {
            return Err(malformed("no segments"));
        }

        let segments: Vec<String> = rest.split('/').map(str::to_owned).collect();
        let last = segments.len() - 1;
        for (i, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                return Err(malformed("empty segment"));
            }
            if seg == DEEP {
                if i != last {
                    return Err(malformed("'**' must be the last segment"));
                }
            } else if seg != SINGLE && seg.contains('*') {
                return Err(malformed("wildcard must be a whole segment"));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn last_segment(&self) -> &str {
        // at least one segment by construction
        &self.segments[self.segments.len() - 1]
    }

    pub fn is_wildcard(&self) -> bool {
        self.segments.iter().any(|s| s == SINGLE || s == DEEP)
    }

    pub fn is_meta(&self) -> bool {
        self.segments[0] == "meta"
    }

    /// Whether `concrete` belongs to the set of channels denoted by `self`.
    pub fn matches(&self, concrete: &ChannelName) -> Result<bool, ProtocolError> {
        if concrete.is_wildcard() {
            return Err(ProtocolError::WildcardInConcrete(concrete.to_string()));
        }
        let pat = &self.segments;
        let cs = &concrete.segments;
        let deep = pat.last().is_some_and(|s| s == DEEP);
        let fixed = if deep { pat.len() - 1 } else { pat.len() };

        let count_ok = if deep { cs.len() > fixed } else { cs.len() == fixed };
        if !count_ok {
            return Ok(false);
        }
        Ok(pat[..fixed]
            .iter()
            .zip(cs)
            .all(|(p, c)| p == SINGLE || p == c))
    }
}

/// Free-function form of [`ChannelName::matches`].
pub fn channel_matches(pattern: &ChannelName, concrete: &ChannelName) -> Result<bool, ProtocolError> {
    pattern.matches(concrete)
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl FromStr for ChannelName {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for ChannelName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(s: &str) -> ChannelName {
        ChannelName::parse(s).unwrap()
    }

    #[test]
    fn parses_plain_and_wildcard() {
        assert_eq!(ch("/stock/AAPL").segments(), ["stock", "AAPL"]);
        assert_eq!(ch("/stock/**").segments(), ["stock", "**"]);
        assert_eq!(ch("/stock/*/bid").segments(), ["stock", "*", "bid"]);
        assert_eq!(ch("/stock/AAPL").to_string(), "/stock/AAPL");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["/stock//x", "stock/AAPL", "", "/", "/stock/", "/a*/b", "/**/x", "/a/b**", "/a/**/**"] {
            assert!(
                matches!(ChannelName::parse(bad), Err(ProtocolError::MalformedChannel { .. })),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn meta_detection() {
        assert!(ch("/meta/connect").is_meta());
        assert!(!ch("/stock/meta").is_meta());
        assert!(!ch("/metadata").is_meta());
    }

    #[test]
    fn match_truth_table() {
        let cases = [
            ("/stock/AAPL", "/stock/AAPL", true),
            ("/stock/AAPL", "/stock/GOOG", false),
            ("/stock/*", "/stock/GOOG", true),
            ("/stock/*", "/stock/GOOG/bid", false),
            ("/stock/*", "/stock", false),
            ("/stock/**", "/stock/GOOG/bid", true),
            ("/stock/**", "/stock/GOOG", true),
            ("/stock/**", "/stock", false),
            ("/*/AAPL", "/stock/AAPL", true),
            ("/*/AAPL", "/bond/GOOG", false),
            ("/**", "/a/b/c", true),
        ];
        for (p, c, want) in cases {
            assert_eq!(ch(p).matches(&ch(c)).unwrap(), want, "{p} vs {c}");
        }
    }

    #[test]
    fn wildcard_concrete_is_error() {
        let err = ch("/stock/*").matches(&ch("/stock/*")).unwrap_err();
        assert!(matches!(err, ProtocolError::WildcardInConcrete(_)));
    }
}
