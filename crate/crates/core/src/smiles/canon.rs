//! Canonical SMILES writer.
//!
//! Atoms are ranked by iterative neighborhood refinement of
//! (degree, element, aromaticity, charge, hydrogens, ring membership),
//! so output starts from a terminal atom whenever one exists.
//! Remaining ties are broken by trying every member of the lowest tied
//! class and keeping the lexicographically smallest output, so the result
//! does not depend on the input atom order.

use super::graph::{BondOrder, MolGraph};

/// Upper bound on fully-ranked orderings explored per molecule.
const MAX_LEAVES: usize = 4096;

pub fn write_canonical(g: &MolGraph) -> String {
    let ranks = initial_ranks(g);
    let mut best: Option<String> = None;
    let mut leaves = 0;
    search(g, ranks, &mut best, &mut leaves);
    best.expect("at least one ordering is always emitted")
}

fn ranks_from_keys<K: Ord>(keys: &[K]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0u32; keys.len()];
    for (pos, &atom) in order.iter().enumerate() {
        ranks[atom] = if pos > 0 && keys[order[pos - 1]] == keys[atom] {
            ranks[order[pos - 1]]
        } else {
            pos as u32
        };
    }
    ranks
}

fn class_count(ranks: &[u32]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn initial_ranks(g: &MolGraph) -> Vec<u32> {
    let ring = g.ring_atoms();
    let keys: Vec<_> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            (
                g.degree(i),
                a.element,
                a.aromatic,
                a.charge,
                a.hydrogens,
                ring[i],
            )
        })
        .collect();
    ranks_from_keys(&keys)
}

fn refine(g: &MolGraph, ranks: &mut Vec<u32>) {
    let mut classes = class_count(ranks);
    loop {
        let keys: Vec<(u32, Vec<(u8, u32)>)> = (0..g.atom_count())
            .map(|i| {
                let mut env: Vec<(u8, u32)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (g.bonds()[b].order.code(), ranks[j]))
                    .collect();
                env.sort_unstable();
                (ranks[i], env)
            })
            .collect();
        let next = ranks_from_keys(&keys);
        let next_classes = class_count(&next);
        *ranks = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
}

fn search(g: &MolGraph, ranks: Vec<u32>, best: &mut Option<String>, leaves: &mut usize) {
    let n = ranks.len();
    // depth-first over tie-breaking choices, first member explored first
    let mut stack = vec![ranks];
    while let Some(mut ranks) = stack.pop() {
        if *leaves >= MAX_LEAVES {
            return;
        }
        refine(g, &mut ranks);
        if class_count(&ranks) == n {
            *leaves += 1;
            let s = emit(g, &ranks);
            if best.as_ref().is_none_or(|b| s < *b) {
                *best = Some(s);
            }
            continue;
        }
        // lowest rank shared by more than one atom
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r as usize] += 1;
        }
        let tied = (0..n).find(|&r| counts[r] > 1).unwrap() as u32;
        let members: Vec<usize> = (0..n).filter(|&i| ranks[i] == tied).collect();
        for &chosen in distinct_up_to_twins(g, &members).iter().rev() {
            let mut next = ranks.clone();
            for &m in &members {
                if m != chosen {
                    next[m] = tied + 1;
                }
            }
            stack.push(next);
        }
    }
}

/// Drops every member that has an earlier twin, an atom with the same
/// neighbor set and bond orders. Swapping twins of equal rank is an
/// automorphism that fixes the current ranking, so their subtrees emit the
/// same strings.
fn distinct_up_to_twins(g: &MolGraph, members: &[usize]) -> Vec<usize> {
    let nbrs = |v: usize| {
        let mut k: Vec<(usize, u8)> = g
            .neighbors(v)
            .iter()
            .map(|&(w, b)| (w, g.bonds()[b].order.code()))
            .collect();
        k.sort_unstable();
        k
    };
    let mut seen: Vec<Vec<(usize, u8)>> = Vec::new();
    let mut out = Vec::new();
    for &m in members {
        let k = nbrs(m);
        if !seen.contains(&k) {
            seen.push(k);
            out.push(m);
        }
    }
    out
}

struct Emitter<'g> {
    g: &'g MolGraph,
    rank: &'g [u32],
    children: Vec<Vec<(usize, usize)>>,
    /// Ring bonds opened at this atom: (partner, bond).
    opens: Vec<Vec<(usize, usize)>>,
    /// Ring bonds closed at this atom: (partner, bond).
    closes: Vec<Vec<(usize, usize)>>,
    digit_of_bond: Vec<Option<u16>>,
    digit_in_use: Vec<bool>,
    out: String,
}

fn emit(g: &MolGraph, rank: &[u32]) -> String {
    let n = g.atom_count();
    let mut e = Emitter {
        g,
        rank,
        children: vec![Vec::new(); n],
        opens: vec![Vec::new(); n],
        closes: vec![Vec::new(); n],
        digit_of_bond: vec![None; g.bonds().len()],
        digit_in_use: vec![false; 100],
        out: String::with_capacity(n * 2),
    };
    let start = (0..n).min_by_key(|&i| rank[i]).unwrap();
    let mut visited = vec![false; n];
    let mut used = vec![false; g.bonds().len()];
    e.plan(start, &mut visited, &mut used);
    e.write(start);
    e.out
}

impl Emitter<'_> {
    fn sorted_neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        let mut nbrs = self.g.neighbors(v).to_vec();
        nbrs.sort_by_key(|&(w, _)| self.rank[w]);
        nbrs
    }

    fn plan(&mut self, start: usize, visited: &mut [bool], used: &mut [bool]) {
        visited[start] = true;
        let mut stack = vec![(start, self.sorted_neighbors(start), 0usize)];
        while let Some((v, nbrs, next)) = stack.last_mut() {
            let v = *v;
            let Some(&(w, b)) = nbrs.get(*next) else {
                stack.pop();
                continue;
            };
            *next += 1;
            if used[b] {
                continue;
            }
            used[b] = true;
            if visited[w] {
                self.opens[w].push((v, b));
                self.closes[v].push((w, b));
            } else {
                visited[w] = true;
                self.children[v].push((w, b));
                let nw = self.sorted_neighbors(w);
                stack.push((w, nw, 0));
            }
        }
    }

    fn bond_symbol(&self, bond: usize) -> &'static str {
        let b = self.g.bonds()[bond];
        let atoms = self.g.atoms();
        match b.order {
            BondOrder::Single if atoms[b.a].aromatic && atoms[b.b].aromatic => "-",
            BondOrder::Single | BondOrder::Aromatic => "",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
        }
    }

    fn atom_symbol(&self, v: usize) -> String {
        let atom = self.g.atoms()[v];
        let mut symbol = atom.element.symbol().to_owned();
        if atom.aromatic {
            symbol = symbol.to_ascii_lowercase();
        }
        if atom.charge == 0 && atom.hydrogens == self.g.implicit_hydrogens(v) {
            return symbol;
        }
        let mut s = format!("[{symbol}");
        match atom.hydrogens {
            0 => {}
            1 => s.push('H'),
            h => s.push_str(&format!("H{h}")),
        }
        match atom.charge {
            0 => {}
            1 => s.push('+'),
            -1 => s.push('-'),
            c if c > 0 => s.push_str(&format!("+{c}")),
            c => s.push_str(&format!("-{}", -c)),
        }
        s.push(']');
        s
    }

    fn push_digit(&mut self, d: u16) {
        if d < 10 {
            self.out.push(char::from(b'0' + d as u8));
        } else {
            self.out.push_str(&format!("%{d:02}"));
        }
    }

    fn write(&mut self, start: usize) {
        enum Step {
            Atom(usize, Option<usize>),
            Text(char),
        }
        let mut stack = vec![Step::Atom(start, None)];
        while let Some(step) = stack.pop() {
            match step {
                Step::Text(c) => self.out.push(c),
                Step::Atom(v, via) => {
                    self.write_atom(v, via);
                    let children = &self.children[v];
                    let last = children.len().saturating_sub(1);
                    // pushed in reverse so that branches come out in rank order
                    for (k, &(w, b)) in children.iter().enumerate().rev() {
                        if k < last {
                            stack.push(Step::Text(')'));
                            stack.push(Step::Atom(w, Some(b)));
                            stack.push(Step::Text('('));
                        } else {
                            stack.push(Step::Atom(w, Some(b)));
                        }
                    }
                }
            }
        }
    }

    fn write_atom(&mut self, v: usize, via: Option<usize>) {
        if let Some(b) = via {
            let sym = self.bond_symbol(b);
            self.out.push_str(sym);
        }
        let sym = self.atom_symbol(v);
        self.out.push_str(&sym);

        let mut closing: Vec<u16> = self.closes[v]
            .iter()
            .map(|&(_, b)| self.digit_of_bond[b].expect("opened before closing"))
            .collect();
        closing.sort_unstable();
        for &d in &closing {
            self.push_digit(d);
        }
        let mut opens = self.opens[v].clone();
        opens.sort_by_key(|&(w, _)| self.rank[w]);
        for (_, b) in opens {
            let d = (1..100u16)
                .find(|&d| !self.digit_in_use[d as usize])
                .expect("fewer than 100 open rings");
            self.digit_in_use[d as usize] = true;
            self.digit_of_bond[b] = Some(d);
            let sym = self.bond_symbol(b);
            self.out.push_str(sym);
            self.push_digit(d);
        }
        for d in closing {
            self.digit_in_use[d as usize] = false;
        }
    }
}
