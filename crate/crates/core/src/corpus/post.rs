use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One social-media message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    #[serde(serialize_with = "ser_ts", deserialize_with = "de_ts")]
    pub created_at: DateTime<Utc>,
    pub lang: String,
    pub text: String,
    pub is_retweet: bool,
    pub is_reply: bool,
    pub is_quote: bool,
}

impl Post {
    /// A plain post with all flags cleared.
    pub fn new(
        id: impl Into<String>,
        created_at: DateTime<Utc>,
        lang: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Post {
            id: id.into(),
            created_at,
            lang: lang.into(),
            text: text.into(),
            is_retweet: false,
            is_reply: false,
            is_quote: false,
        }
    }
}

pub(crate) fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an RFC 3339 instant and truncates it to whole seconds.
pub(crate) fn parse_ts(raw: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    let ts = DateTime::parse_from_rfc3339(raw.trim())?.with_timezone(&Utc);
    Ok(DateTime::from_timestamp(ts.timestamp(), 0).unwrap_or(ts))
}

pub(crate) fn ser_ts<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_ts(ts))
}

pub(crate) fn de_ts<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let raw = String::deserialize(d)?;
    parse_ts(&raw).map_err(serde::de::Error::custom)
}

pub(crate) fn valid_lang(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

macro_rules! closed_label {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "SCREAMING_SNAKE_CASE")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// The uppercase enum name used in annotation files and reports.
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(UnknownLabel(other.to_string())),
                }
            }
        }
    };
}

closed_label! {
    /// Stance toward the focus issue.
    StanceLabel {
        Supportive => "SUPPORTIVE",
        Against => "AGAINST",
        Neutral => "NEUTRAL",
    }
}

closed_label! {
    /// Manual topic categories used to validate discovered clusters.
    TopicLabelManual {
        Irrelevant => "IRRELEVANT",
        Game => "GAME",
        News => "NEWS",
        Boycott => "BOYCOTT",
        HumanRights => "HUMAN_RIGHTS",
        Onelove => "ONELOVE",
        Politics => "POLITICS",
    }
}

impl StanceLabel {
    /// The lowercase string a model is asked to produce for this label.
    pub fn decision_str(self) -> &'static str {
        match self {
            StanceLabel::Supportive => "supportive",
            StanceLabel::Against => "against",
            StanceLabel::Neutral => "neutral",
        }
    }

    /// Decision strings in [`StanceLabel::ALL`] order.
    pub fn decision_strings() -> [String; 3] {
        std::array::from_fn(|i| StanceLabel::ALL[i].decision_str().to_string())
    }
}
