//! Condition sets and the per-sample bundle of condition tokens.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{assemble_sequence, TokenFragment, TokenSequence, TokenizerError};

/// A non-text condition. Text is always present (possibly as the null prompt).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Camera,
    Identity,
    Depth,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Camera, Condition::Identity, Condition::Depth];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Camera => "camera",
            Condition::Identity => "identity",
            Condition::Depth => "depth",
        }
    }
}

/// A subset of `{camera, identity, depth}`; serialized as a sorted list.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(from = "Vec<Condition>", into = "Vec<Condition>")]
pub struct ConditionSet {
    bits: u8,
}

impl ConditionSet {
    pub const EMPTY: ConditionSet = ConditionSet { bits: 0 };
    pub const FULL: ConditionSet = ConditionSet { bits: 0b111 };

    fn bit(c: Condition) -> u8 {
        1 << (c as u8)
    }

    pub fn of(conds: &[Condition]) -> Self {
        conds.iter().fold(Self::EMPTY, |s, &c| s.with(c))
    }

    pub fn with(self, c: Condition) -> Self {
        Self {
            bits: self.bits | Self::bit(c),
        }
    }

    pub fn without(self, c: Condition) -> Self {
        Self {
            bits: self.bits & !Self::bit(c),
        }
    }

    pub fn contains(self, c: Condition) -> bool {
        self.bits & Self::bit(c) != 0
    }

    pub fn is_subset(self, other: ConditionSet) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn intersection(self, other: ConditionSet) -> Self {
        Self {
            bits: self.bits & other.bits,
        }
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Condition> {
        Condition::ALL
            .into_iter()
            .filter(move |&c| self.contains(c))
    }
}

impl From<Vec<Condition>> for ConditionSet {
    fn from(v: Vec<Condition>) -> Self {
        Self::of(&v)
    }
}

impl From<ConditionSet> for Vec<Condition> {
    fn from(s: ConditionSet) -> Self {
        s.iter().collect()
    }
}

impl fmt::Display for ConditionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("text");
        }
        let names: Vec<&str> = self.iter().map(Condition::name).collect();
        f.write_str(&names.join("+"))
    }
}

/// Tokens of one training or sampling example: the video block, any subset
/// of condition blocks, and the text ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedTokens {
    pub video: TokenFragment,
    pub camera: Option<TokenFragment>,
    pub identity: Option<TokenFragment>,
    pub depth: Option<TokenFragment>,
    pub text: Vec<u32>,
}

impl ConditionedTokens {
    pub fn conditions(&self) -> ConditionSet {
        let mut s = ConditionSet::EMPTY;
        if self.camera.is_some() {
            s = s.with(Condition::Camera);
        }
        if self.identity.is_some() {
            s = s.with(Condition::Identity);
        }
        if self.depth.is_some() {
            s = s.with(Condition::Depth);
        }
        s
    }

    /// Drops every condition block outside `keep`; the video block is untouched.
    pub fn restricted(&self, keep: ConditionSet) -> Self {
        Self {
            video: self.video.clone(),
            camera: self
                .camera
                .clone()
                .filter(|_| keep.contains(Condition::Camera)),
            identity: self
                .identity
                .clone()
                .filter(|_| keep.contains(Condition::Identity)),
            depth: self
                .depth
                .clone()
                .filter(|_| keep.contains(Condition::Depth)),
            text: self.text.clone(),
        }
    }

    pub fn assemble(&self, pad_to: Option<usize>) -> Result<TokenSequence, TokenizerError> {
        assemble_sequence(
            self.video.clone(),
            self.camera.clone(),
            self.identity.clone(),
            self.depth.clone(),
            pad_to,
        )
    }
}
