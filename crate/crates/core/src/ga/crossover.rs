//! Fragment-exchange crossover across acyclic single bonds.

use rand::Rng;

use crate::smiles::{Bond, BondOrder, MolGraph};

/// Indices of single bonds that are not part of any ring.
pub fn cuttable_bonds(g: &MolGraph) -> Vec<usize> {
    let ring = g.ring_bonds();
    g.bonds()
        .iter()
        .enumerate()
        .filter(|&(i, b)| b.order == BondOrder::Single && !ring[i])
        .map(|(i, _)| i)
        .collect()
}

/// Atoms reachable from `start` without crossing `cut`.
fn fragment(g: &MolGraph, cut: usize, start: usize) -> Vec<usize> {
    let mut seen = vec![false; g.atom_count()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        out.push(v);
        for &(w, b) in g.neighbors(v) {
            if b != cut && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Joins the fragment of `a` holding `a_atom` (after cutting `a_bond`) to
/// the fragment of `b` holding `b_atom` with a single bond between the two
/// attachment atoms. Hydrogen counts are unchanged: the cut frees one
/// valence on each attachment atom and the new bond consumes it.
pub fn join_fragments(
    a: &MolGraph,
    a_bond: usize,
    a_atom: usize,
    b: &MolGraph,
    b_bond: usize,
    b_atom: usize,
) -> MolGraph {
    let fa = fragment(a, a_bond, a_atom);
    let fb = fragment(b, b_bond, b_atom);
    let mut map_a = vec![usize::MAX; a.atom_count()];
    let mut map_b = vec![usize::MAX; b.atom_count()];
    let mut atoms = Vec::with_capacity(fa.len() + fb.len());
    for &i in &fa {
        map_a[i] = atoms.len();
        atoms.push(a.atoms()[i]);
    }
    for &i in &fb {
        map_b[i] = atoms.len();
        atoms.push(b.atoms()[i]);
    }
    let mut bonds = Vec::new();
    for (g, map, cut) in [(a, &map_a, a_bond), (b, &map_b, b_bond)] {
        for (i, bond) in g.bonds().iter().enumerate() {
            if i != cut && map[bond.a] != usize::MAX && map[bond.b] != usize::MAX {
                bonds.push(Bond {
                    a: map[bond.a],
                    b: map[bond.b],
                    order: bond.order,
                });
            }
        }
    }
    bonds.push(Bond {
        a: map_a[a_atom],
        b: map_b[b_atom],
        order: BondOrder::Single,
    });
    MolGraph::new(atoms, bonds).expect("fragments joined by one bond form a valid graph")
}

/// Cuts a uniformly chosen acyclic single bond in each parent and joins a
/// random side of each. `None` when either parent has no such bond.
pub fn crossover<R: Rng + ?Sized>(a: &MolGraph, b: &MolGraph, rng: &mut R) -> Option<MolGraph> {
    let ca = cuttable_bonds(a);
    let cb = cuttable_bonds(b);
    if ca.is_empty() || cb.is_empty() {
        return None;
    }
    let ba = ca[rng.random_range(0..ca.len())];
    let bb = cb[rng.random_range(0..cb.len())];
    let side_a = if rng.random::<bool>() { a.bonds()[ba].a } else { a.bonds()[ba].b };
    let side_b = if rng.random::<bool>() { b.bonds()[bb].a } else { b.bonds()[bb].b };
    Some(join_fragments(a, ba, side_a, b, bb, side_b))
}

/// Every child [`crossover`] can produce, one per (cut, side) combination.
pub fn all_children(a: &MolGraph, b: &MolGraph) -> Vec<MolGraph> {
    let mut out = Vec::new();
    for &ba in &cuttable_bonds(a) {
        for &bb in &cuttable_bonds(b) {
            for side_a in [a.bonds()[ba].a, a.bonds()[ba].b] {
                for side_b in [b.bonds()[bb].a, b.bonds()[bb].b] {
                    out.push(join_fragments(a, ba, side_a, b, bb, side_b));
                }
            }
        }
    }
    out
}
