//! Ulam-Harris-Neveu labels.
//!
//! A label is a finite word over the positive integers. The empty word is the
//! phantom root; the initial individuals are `1, 2, ..., n` and the `i`-th
//! child of `u` is `u i`. Labels order lexicographically, which groups
//! siblings together and puts every ancestor before its descendants.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(Vec<u32>);

impl Label {
    /// The phantom root `∅`.
    pub const fn root() -> Self {
        Label(Vec::new())
    }

    /// Builds a label from its path.
    ///
    /// Panics if a component is zero; use [`Label::try_new`] for untrusted input.
    pub fn new(path: &[u32]) -> Self {
        Self::try_new(path).expect("label components are positive integers")
    }

    pub fn try_new(path: &[u32]) -> Option<Self> {
        if path.contains(&0) {
            None
        } else {
            Some(Label(path.to_vec()))
        }
    }

    /// Label of the `i`-th individual of the ancestor generation.
    pub fn ancestor(i: u32) -> Self {
        Label::new(&[i])
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Label) -> Label {
        let mut path = Vec::with_capacity(self.0.len() + other.0.len());
        path.extend_from_slice(&self.0);
        path.extend_from_slice(&other.0);
        Label(path)
    }

    /// Label `u i` of the `i`-th child (1-based).
    pub fn child(&self, i: u32) -> Label {
        assert!(i > 0, "child indices start at 1");
        let mut path = Vec::with_capacity(self.0.len() + 1);
        path.extend_from_slice(&self.0);
        path.push(i);
        Label(path)
    }

    pub fn parent(&self) -> Option<Label> {
        if self.0.is_empty() {
            None
        } else {
            Some(Label(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// `self ⪯ other`: `other = self w` for some (possibly empty) `w`.
    pub fn is_ancestor_of(&self, other: &Label) -> bool {
        other.0.starts_with(&self.0)
    }

    /// `self ≺ other`: ancestor with a non-empty suffix.
    pub fn is_strict_ancestor_of(&self, other: &Label) -> bool {
        other.0.len() > self.0.len() && self.is_ancestor_of(other)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}
