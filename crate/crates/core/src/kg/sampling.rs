use std::collections::HashSet;

use rand::Rng;

use crate::graph::Triple;

fn corrupt(t: Triple, replace_head: bool, entity: usize) -> Triple {
    if replace_head {
        Triple { head: entity, ..t }
    } else {
        Triple { tail: entity, ..t }
    }
}

/// Corrupts the head or the tail (fair coin) with a uniformly drawn entity.
///
/// Candidates that are known facts, equal `t`, or would be self-loops are
/// rejected. After `4n` rejected draws any corruption that differs from `t`
/// is returned, self-loops included.
pub fn negative_sample<R: Rng>(t: Triple, n: usize, known: &HashSet<Triple>, rng: &mut R) -> Triple {
    assert!(n >= 2, "negative sampling needs at least two entities");
    for _ in 0..n * 4 {
        let replace_head = rng.gen::<bool>();
        let c = corrupt(t, replace_head, rng.gen_range(0..n));
        if c != t && c.head != c.tail && !known.contains(&c) {
            return c;
        }
    }
    loop {
        let c = corrupt(t, rng.gen::<bool>(), rng.gen_range(0..n));
        if c != t {
            return c;
        }
    }
}
