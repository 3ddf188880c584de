//! Formal contexts, the two derivation operators and concept enumeration.
//!
//! Incidence is stored twice as dense bitsets (rows per object, columns per
//! attribute) so both derivations are word-parallel intersections. Concepts
//! are enumerated with NextClosure, which yields intents in lectic order with
//! respect to the attribute order fixed when the context was built.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::sets;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("object {0} declared twice")]
    DuplicateObject(String),
    #[error("attribute {0} declared twice")]
    DuplicateAttribute(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("unknown attribute {0}")]
    UnknownAttribute(String),
}

/// A formal concept. Both sides are kept sorted ascending so that structural
/// equality does not depend on the context the concept came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FormalConcept<O, A> {
    pub extent: Vec<O>,
    pub intent: Vec<A>,
}

impl<O: Ord, A: Ord> FormalConcept<O, A> {
    pub fn new(extent: Vec<O>, intent: Vec<A>) -> Self {
        Self {
            extent: sets::normalize(extent),
            intent: sets::normalize(intent),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FormalContext<O, A> {
    objects: Vec<O>,
    attributes: Vec<A>,
    object_index: HashMap<O, usize>,
    attribute_index: HashMap<A, usize>,
    rows: Vec<FixedBitSet>,
    columns: Vec<FixedBitSet>,
}

/// Output of [`FormalContext::enumerate`]: the concepts plus the number of
/// closure computations NextClosure performed to find them.
#[derive(Debug, Clone)]
pub struct Enumeration<O, A> {
    pub concepts: Vec<FormalConcept<O, A>>,
    pub closures: u64,
}

impl<O, A> FormalContext<O, A>
where
    O: Copy + Ord + Hash + Debug,
    A: Copy + Ord + Hash + Debug,
{
    pub fn new(
        objects: Vec<O>,
        attributes: Vec<A>,
        incidence: impl IntoIterator<Item = (O, A)>,
    ) -> Result<Self, ContextError> {
        let mut object_index = HashMap::with_capacity(objects.len());
        for (i, &o) in objects.iter().enumerate() {
            if object_index.insert(o, i).is_some() {
                return Err(ContextError::DuplicateObject(format!("{o:?}")));
            }
        }
        let mut attribute_index = HashMap::with_capacity(attributes.len());
        for (i, &a) in attributes.iter().enumerate() {
            if attribute_index.insert(a, i).is_some() {
                return Err(ContextError::DuplicateAttribute(format!("{a:?}")));
            }
        }
        let mut rows = vec![FixedBitSet::with_capacity(attributes.len()); objects.len()];
        let mut columns = vec![FixedBitSet::with_capacity(objects.len()); attributes.len()];
        for (o, a) in incidence {
            let oi = *object_index
                .get(&o)
                .ok_or_else(|| ContextError::UnknownObject(format!("{o:?}")))?;
            let ai = *attribute_index
                .get(&a)
                .ok_or_else(|| ContextError::UnknownAttribute(format!("{a:?}")))?;
            rows[oi].insert(ai);
            columns[ai].insert(oi);
        }
        Ok(Self {
            objects,
            attributes,
            object_index,
            attribute_index,
            rows,
            columns,
        })
    }

    /// Builds a context from per-object attribute lists. Attributes are
    /// declared in first-seen order.
    pub fn from_rows<'a, I, R>(rows: I) -> Result<Self, ContextError>
    where
        I: IntoIterator<Item = (O, R)>,
        R: IntoIterator<Item = &'a A>,
        A: 'a,
    {
        let mut objects = Vec::new();
        let mut attributes = Vec::new();
        let mut seen = HashMap::new();
        let mut incidence = Vec::new();
        for (o, attrs) in rows {
            objects.push(o);
            for &a in attrs {
                if seen.insert(a, ()).is_none() {
                    attributes.push(a);
                }
                incidence.push((o, a));
            }
        }
        Self::new(objects, attributes, incidence)
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), std::iter::empty()).expect("empty context is valid")
    }

    pub fn objects(&self) -> &[O] {
        &self.objects
    }

    pub fn attributes(&self) -> &[A] {
        &self.attributes
    }

    pub fn incident(&self, o: O, a: A) -> bool {
        match (self.object_index.get(&o), self.attribute_index.get(&a)) {
            (Some(&oi), Some(&ai)) => self.rows[oi].contains(ai),
            _ => false,
        }
    }

    /// Attributes shared by every object in `objs`, sorted ascending.
    pub fn derive_intent(&self, objs: &[O]) -> Result<Vec<A>, ContextError> {
        let mut bits = self.full_attributes();
        for o in objs {
            let oi = self
                .object_index
                .get(o)
                .ok_or_else(|| ContextError::UnknownObject(format!("{o:?}")))?;
            bits.intersect_with(&self.rows[*oi]);
        }
        Ok(sets::normalize(
            bits.ones().map(|i| self.attributes[i]).collect(),
        ))
    }

    /// Objects possessing every attribute in `attrs`, sorted ascending.
    pub fn derive_extent(&self, attrs: &[A]) -> Result<Vec<O>, ContextError> {
        let mut bits = self.full_objects();
        for a in attrs {
            let ai = self
                .attribute_index
                .get(a)
                .ok_or_else(|| ContextError::UnknownAttribute(format!("{a:?}")))?;
            bits.intersect_with(&self.columns[*ai]);
        }
        Ok(sets::normalize(
            bits.ones().map(|i| self.objects[i]).collect(),
        ))
    }

    /// Checks that `concept` is closed in this context.
    pub fn is_concept(&self, concept: &FormalConcept<O, A>) -> bool {
        match (
            self.derive_intent(&concept.extent),
            self.derive_extent(&concept.intent),
        ) {
            (Ok(intent), Ok(extent)) => intent == concept.intent && extent == concept.extent,
            _ => false,
        }
    }

    pub fn concepts(&self) -> Vec<FormalConcept<O, A>> {
        self.enumerate().concepts
    }

    /// All concepts in lectic order of their intents (NextClosure).
    pub fn enumerate(&self) -> Enumeration<O, A> {
        let m = self.attributes.len();
        let mut closures = 0u64;
        let mut concepts = Vec::new();

        let (mut extent, mut intent) = self.close(&FixedBitSet::with_capacity(m));
        closures += 1;
        loop {
            concepts.push(self.materialize(&extent, &intent));
            let mut candidate = intent.clone();
            let mut next = None;
            for i in (0..m).rev() {
                if candidate.contains(i) {
                    candidate.set(i, false);
                    continue;
                }
                candidate.insert(i);
                let (e, closed) = self.close(&candidate);
                closures += 1;
                candidate.set(i, false);
                // accept iff closing added nothing below i
                if closed.count_ones(..i) == candidate.count_ones(..i) {
                    next = Some((e, closed));
                    break;
                }
            }
            match next {
                Some((e, i)) => {
                    extent = e;
                    intent = i;
                }
                None => break,
            }
        }
        Enumeration { concepts, closures }
    }

    fn full_attributes(&self) -> FixedBitSet {
        let mut bits = FixedBitSet::with_capacity(self.attributes.len());
        bits.insert_range(..);
        bits
    }

    fn full_objects(&self) -> FixedBitSet {
        let mut bits = FixedBitSet::with_capacity(self.objects.len());
        bits.insert_range(..);
        bits
    }

    /// `attrs -> (attrs', attrs'')` over index bitsets.
    fn close(&self, attrs: &FixedBitSet) -> (FixedBitSet, FixedBitSet) {
        let mut extent = self.full_objects();
        for a in attrs.ones() {
            extent.intersect_with(&self.columns[a]);
        }
        let mut intent = self.full_attributes();
        for o in extent.ones() {
            intent.intersect_with(&self.rows[o]);
        }
        (extent, intent)
    }

    fn materialize(&self, extent: &FixedBitSet, intent: &FixedBitSet) -> FormalConcept<O, A> {
        FormalConcept::new(
            extent.ones().map(|i| self.objects[i]).collect(),
            intent.ones().map(|i| self.attributes[i]).collect(),
        )
    }
}

/// Exhaustive reference enumeration: closes every subset of objects.
///
/// Exponential in the number of objects; meant for cross-checking
/// [`FormalContext::enumerate`] on contexts of a dozen objects or so. It only
/// uses plain set scans over the incidence pairs, never the bitset machinery.
pub mod brute_force {
    use std::collections::BTreeSet;

    use super::FormalConcept;

    pub fn concepts<O: Copy + Ord, A: Copy + Ord>(
        objects: &[O],
        attributes: &[A],
        incidence: &BTreeSet<(O, A)>,
    ) -> BTreeSet<FormalConcept<O, A>> {
        assert!(
            objects.len() < 24,
            "brute force over {} objects",
            objects.len()
        );
        let intent_of = |objs: &[O]| -> Vec<A> {
            attributes
                .iter()
                .copied()
                .filter(|&a| objs.iter().all(|&o| incidence.contains(&(o, a))))
                .collect()
        };
        let extent_of = |attrs: &[A]| -> Vec<O> {
            objects
                .iter()
                .copied()
                .filter(|&o| attrs.iter().all(|&a| incidence.contains(&(o, a))))
                .collect()
        };
        let mut out = BTreeSet::new();
        for mask in 0u32..(1 << objects.len()) {
            let subset: Vec<O> = objects
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &o)| o)
                .collect();
            let intent = intent_of(&subset);
            let extent = extent_of(&intent);
            out.insert(FormalConcept::new(extent, intent));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    fn sample() -> FormalContext<u32, u32> {
        // q1:{t1,t2} q2:{t2,t3} q3:{t1,t2,t3}
        FormalContext::from_rows([
            (1, [1u32, 2].as_slice()),
            (2, [2, 3].as_slice()),
            (3, [1, 2, 3].as_slice()),
        ])
        .unwrap()
    }

    #[test]
    fn derive_intent_examples() {
        let ctx = sample();
        assert_eq!(ctx.derive_intent(&[1, 3]).unwrap(), vec![1, 2]);
        assert_eq!(ctx.derive_intent(&[]).unwrap(), vec![1, 2, 3]);
        assert_eq!(ctx.derive_intent(&[1, 2, 3]).unwrap(), vec![2]);
        assert_eq!(
            ctx.derive_intent(&[9]),
            Err(ContextError::UnknownObject("9".into()))
        );
    }

    #[test]
    fn derive_extent_examples() {
        let ctx = sample();
        assert_eq!(ctx.derive_extent(&[1]).unwrap(), vec![1, 3]);
        assert_eq!(ctx.derive_extent(&[]).unwrap(), vec![1, 2, 3]);
        assert_eq!(ctx.derive_extent(&[1, 3]).unwrap(), vec![3]);
        assert!(matches!(
            ctx.derive_extent(&[7]),
            Err(ContextError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn empty_context_has_one_concept() {
        let ctx = FormalContext::<u32, u32>::empty();
        assert_eq!(ctx.concepts(), vec![FormalConcept::new(vec![], vec![])]);
    }

    #[test]
    fn sample_concepts_in_lectic_order() {
        let got = sample().concepts();
        let c = |e: &[u32], i: &[u32]| FormalConcept::new(e.to_vec(), i.to_vec());
        // attribute order t1,t2,t3: {t2} < {t2,t3} < {t1,t2} < {t1,t2,t3}
        assert_eq!(
            got,
            vec![
                c(&[1, 2, 3], &[2]),
                c(&[2, 3], &[2, 3]),
                c(&[1, 3], &[1, 2]),
                c(&[3], &[1, 2, 3]),
            ]
        );
    }

    #[test]
    fn rejects_bad_declarations() {
        assert!(matches!(
            FormalContext::<u32, u32>::new(vec![1, 1], vec![], []),
            Err(ContextError::DuplicateObject(_))
        ));
        assert!(matches!(
            FormalContext::<u32, u32>::new(vec![1], vec![2, 2], []),
            Err(ContextError::DuplicateAttribute(_))
        ));
        assert!(matches!(
            FormalContext::<u32, u32>::new(vec![1], vec![2], [(1, 3)]),
            Err(ContextError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn attributes_without_objects() {
        let ctx = FormalContext::<u32, u32>::new(vec![], vec![5, 6], []).unwrap();
        assert_eq!(ctx.concepts(), vec![FormalConcept::new(vec![], vec![5, 6])]);
    }

    fn arb_context() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
        (0usize..=8, 0usize..=8).prop_flat_map(|(n, m)| {
            (
                Just(n),
                Just(m),
                proptest::collection::vec(any::<bool>(), n * m),
            )
        })
    }

    fn build(
        n: usize,
        m: usize,
        cells: &[bool],
    ) -> (FormalContext<u32, u32>, BTreeSet<(u32, u32)>) {
        let inc: BTreeSet<(u32, u32)> = (0..n)
            .flat_map(|o| (0..m).map(move |a| (o, a)))
            .filter(|&(o, a)| cells[o * m + a])
            .map(|(o, a)| (o as u32, 100 + a as u32))
            .collect();
        let ctx = FormalContext::new(
            (0..n as u32).collect(),
            (0..m as u32).map(|a| 100 + a).collect(),
            inc.iter().copied(),
        )
        .unwrap();
        (ctx, inc)
    }

    proptest! {
        #[test]
        fn matches_brute_force((n, m, cells) in arb_context()) {
            let (ctx, inc) = build(n, m, &cells);
            let got = ctx.concepts();
            let as_set: BTreeSet<_> = got.iter().cloned().collect();
            prop_assert_eq!(as_set.len(), got.len());
            let expected = brute_force::concepts(ctx.objects(), ctx.attributes(), &inc);
            prop_assert_eq!(as_set, expected);
        }

        #[test]
        fn enumeration_is_lectic((n, m, cells) in arb_context()) {
            let (ctx, _) = build(n, m, &cells);
            let got = ctx.concepts();
            for w in got.windows(2) {
                prop_assert_eq!(sets::lectic_cmp(&w[0].intent, &w[1].intent), std::cmp::Ordering::Less);
            }
        }
    }
}
