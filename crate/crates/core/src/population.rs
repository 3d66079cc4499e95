//! Traits, labelled populations and spinal states.

use std::ops::{Index, Range};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Result, SpinalError};
use crate::label::Label;

/// A point of the trait space `R^d`, measured with the l1 norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraitPoint(SmallVec<[f64; 2]>);

impl TraitPoint {
    pub fn scalar(x: f64) -> Self {
        TraitPoint(smallvec::smallvec![x])
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        TraitPoint(SmallVec::from_slice(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        TraitPoint(smallvec::smallvec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// First coordinate; the whole trait for one-dimensional models.
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// `self + h * v`, coordinate-wise.
    pub fn add_scaled(&self, h: f64, v: &TraitPoint) -> TraitPoint {
        TraitPoint(self.0.iter().zip(v.0.iter()).map(|(a, b)| a + h * b).collect())
    }

    pub fn scaled(&self, k: f64) -> TraitPoint {
        TraitPoint(self.0.iter().map(|a| k * a).collect())
    }
}

impl Index<usize> for TraitPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<f64> for TraitPoint {
    fn from(x: f64) -> Self {
        TraitPoint::scalar(x)
    }
}

/// The marginal `ν = Σ δ_x` of a population: its traits without labels.
#[derive(Clone, Copy, Debug)]
pub struct Marginal<'a>(&'a [TraitPoint]);

impl<'a> Marginal<'a> {
    pub fn new(traits: &'a [TraitPoint]) -> Self {
        Marginal(traits)
    }

    /// `⟨ν, 1⟩`.
    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn traits(&self) -> &'a [TraitPoint] {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'a, TraitPoint> {
        self.0.iter()
    }

    /// `⟨ν, f⟩ = Σ f(x)`.
    pub fn integral<F: Fn(&TraitPoint) -> f64>(&self, f: F) -> f64 {
        self.0.iter().map(f).sum()
    }

    /// `⟨ν, |·|⟩`, the total biomass for one-dimensional positive traits.
    pub fn total_mass(&self) -> f64 {
        self.integral(TraitPoint::norm_l1)
    }

    /// Traits of `ν₊ = ν - δ_{x_i} + Σ δ_{y_j}`; children are appended at the end.
    pub fn replaced(&self, index: usize, children: &[TraitPoint]) -> Vec<TraitPoint> {
        let mut out = Vec::with_capacity(self.0.len() + children.len());
        out.extend(
            self.0
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != index)
                .map(|(_, x)| x.clone()),
        );
        out.extend_from_slice(children);
        out
    }
}

/// A finite labelled point measure `Σ δ_(u, x)` at a given time.
///
/// Members are kept sorted by label. Replacing a parent by its children keeps
/// the order because no living label sits strictly between `u` and `u 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    time: f64,
    labels: Vec<Label>,
    traits: Vec<TraitPoint>,
}

impl Population {
    pub fn empty(time: f64) -> Self {
        Population { time, labels: Vec::new(), traits: Vec::new() }
    }

    /// Ancestor generation `1, ..., n` with the given traits.
    pub fn from_traits(time: f64, traits: Vec<TraitPoint>) -> Self {
        let labels = (1..=traits.len() as u32).map(Label::ancestor).collect();
        Population { time, labels, traits }
    }

    pub fn from_scalars(time: f64, xs: &[f64]) -> Self {
        Self::from_traits(time, xs.iter().copied().map(TraitPoint::scalar).collect())
    }

    /// Builds a population from arbitrary members; labels must be pairwise distinct.
    pub fn from_members(time: f64, mut members: Vec<(Label, TraitPoint)>) -> Result<Self> {
        members.sort_by(|a, b| a.0.cmp(&b.0));
        if members.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SpinalError::InvalidArgument("duplicate labels in population".into()));
        }
        let (labels, traits) = members.into_iter().unzip();
        Ok(Population { time, labels, traits })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn traits(&self) -> &[TraitPoint] {
        &self.traits
    }

    pub fn marginal(&self) -> Marginal<'_> {
        Marginal(&self.traits)
    }

    pub fn members(&self) -> impl Iterator<Item = (&Label, &TraitPoint)> {
        self.labels.iter().zip(self.traits.iter())
    }

    /// `⟨ν, f⟩`.
    pub fn integral<F: Fn(&TraitPoint) -> f64>(&self, f: F) -> f64 {
        self.marginal().integral(f)
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.labels.binary_search(label).ok()
    }

    pub fn trait_of(&self, label: &Label) -> Option<&TraitPoint> {
        self.index_of(label).map(|i| &self.traits[i])
    }

    pub(crate) fn with_traits(&self, time: f64, traits: Vec<TraitPoint>) -> Population {
        debug_assert_eq!(traits.len(), self.labels.len());
        Population { time, labels: self.labels.clone(), traits }
    }

    /// Replaces member `index` by `children`, labelled `u 1, ..., u n`.
    /// Returns the index range now occupied by the children.
    pub fn branch(&mut self, index: usize, children: Vec<TraitPoint>) -> Range<usize> {
        let parent = self.labels[index].clone();
        let n = children.len();
        let labels: Vec<Label> = (1..=n as u32).map(|i| parent.child(i)).collect();
        self.labels.splice(index..=index, labels);
        self.traits.splice(index..=index, children);
        index..index + n
    }

    /// True when labels are strictly increasing (hence pairwise distinct).
    pub fn labels_are_consistent(&self) -> bool {
        self.labels.windows(2).all(|w| w[0] < w[1]) && self.labels.len() == self.traits.len()
    }
}

/// A population with a distinguished spinal individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineState {
    spine: Label,
    population: Population,
}

impl SpineState {
    pub fn new(spine: Label, population: Population) -> Result<Self> {
        if population.index_of(&spine).is_none() {
            return Err(SpinalError::SpineNotInPopulation(spine));
        }
        Ok(SpineState { spine, population })
    }

    pub fn spine(&self) -> &Label {
        &self.spine
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn spine_index(&self) -> usize {
        self.population.index_of(&self.spine).expect("spine is a member")
    }

    pub fn spine_trait(&self) -> &TraitPoint {
        &self.population.traits()[self.spine_index()]
    }

    pub fn into_parts(self) -> (Label, Population) {
        (self.spine, self.population)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_integral_examples() {
        let pop = Population::from_scalars(0.0, &[2.0, 3.0]);
        assert_eq!(pop.integral(|x| x.value()), 5.0);
        assert_eq!(pop.integral(|_| 1.0), 2.0);
        let empty = Population::empty(0.0);
        assert_eq!(empty.integral(|x| x.value() * 7.0), 0.0);
    }

    #[test]
    fn branching_keeps_labels_sorted() {
        let mut pop = Population::from_scalars(0.0, &[1.0, 2.0, 3.0]);
        let range = pop.branch(1, vec![TraitPoint::scalar(0.5), TraitPoint::scalar(1.5)]);
        assert_eq!(range, 1..3);
        assert_eq!(
            pop.labels(),
            &[Label::new(&[1]), Label::new(&[2, 1]), Label::new(&[2, 2]), Label::new(&[3])]
        );
        pop.branch(0, vec![]);
        assert!(pop.labels_are_consistent());
        assert_eq!(pop.len(), 3);
        assert_eq!(pop.integral(|x| x.value()), 5.0);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let m = vec![
            (Label::new(&[1]), TraitPoint::scalar(1.0)),
            (Label::new(&[1]), TraitPoint::scalar(2.0)),
        ];
        assert!(Population::from_members(0.0, m).is_err());
    }

    #[test]
    fn spine_must_be_member() {
        let pop = Population::from_scalars(0.0, &[1.0]);
        assert!(SpineState::new(Label::new(&[2]), pop.clone()).is_err());
        let s = SpineState::new(Label::new(&[1]), pop).unwrap();
        assert_eq!(s.spine_index(), 0);
    }

    #[test]
    fn replaced_marginal() {
        let pop = Population::from_scalars(0.0, &[1.0, 2.0]);
        let next = pop.marginal().replaced(0, &[TraitPoint::scalar(0.25), TraitPoint::scalar(0.75)]);
        let xs: Vec<f64> = next.iter().map(|x| x.value()).collect();
        assert_eq!(xs, vec![2.0, 0.25, 0.75]);
    }
}
