use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SmilesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == s)
    }

    /// Default valence used for implicit hydrogen assignment.
    pub fn valence(self) -> u8 {
        match self {
            Element::B | Element::N | Element::P => 3,
            Element::C => 4,
            Element::O | Element::S => 2,
            Element::F | Element::Cl | Element::Br | Element::I => 1,
        }
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    /// Total attached hydrogens, implicit or written.
    pub hydrogens: u8,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            aromatic: false,
            charge: 0,
            hydrogens: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Valence consumed at each endpoint (aromatic counts 1 plus a per-atom correction).
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// A connected molecular graph with resolved hydrogen counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Per atom: (neighbor, bond index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    /// Builds a graph, checking bond endpoints, duplicate bonds and connectivity.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, SmilesError> {
        if atoms.is_empty() {
            return Err(SmilesError::EmptyInput);
        }
        let mut seen = HashSet::with_capacity(bonds.len());
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (idx, bond) in bonds.iter().enumerate() {
            if bond.a >= atoms.len() || bond.b >= atoms.len() {
                return Err(SmilesError::InvalidGraph(format!(
                    "bond {idx} references a missing atom"
                )));
            }
            if bond.a == bond.b {
                return Err(SmilesError::InvalidGraph(format!("bond {idx} is a self loop")));
            }
            let key = (bond.a.min(bond.b), bond.a.max(bond.b));
            if !seen.insert(key) {
                return Err(SmilesError::DuplicateBond(key.0, key.1));
            }
            adjacency[bond.a].push((bond.b, idx));
            adjacency[bond.b].push((bond.a, idx));
        }
        let g = MolGraph {
            atoms,
            bonds,
            adjacency,
        };
        if !g.is_connected() {
            return Err(SmilesError::InvalidGraph("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    pub(crate) fn bonds_mut(&mut self) -> &mut [Bond] {
        &mut self.bonds
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.atoms.len()
    }

    /// Flags every bond that lies on a cycle (i.e. is not a bridge).
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        // iterative Tarjan bridge search: (vertex, parent bond, next neighbor index)
        let mut stack: Vec<(usize, Option<usize>, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root, None, 0));
            while let Some(frame) = stack.last_mut() {
                let (v, parent_bond, next) = *frame;
                if next < self.adjacency[v].len() {
                    frame.2 += 1;
                    let (w, b) = self.adjacency[v][next];
                    if Some(b) == parent_bond {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, Some(b), 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let (Some(b), Some(parent)) = (parent_bond, stack.last()) {
                        let p = parent.0;
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            is_bridge[b] = true;
                        }
                    }
                }
            }
        }
        is_bridge.into_iter().map(|b| !b).collect()
    }

    /// Flags atoms incident to at least one ring bond.
    pub fn ring_atoms(&self) -> Vec<bool> {
        let ring = self.ring_bonds();
        let mut atoms = vec![false; self.atoms.len()];
        for (bond, &r) in self.bonds.iter().zip(&ring) {
            if r {
                atoms[bond.a] = true;
                atoms[bond.b] = true;
            }
        }
        atoms
    }

    /// Valence consumed by explicit bonds, with the aromatic correction applied.
    pub fn consumed_valence(&self, atom: usize) -> u32 {
        let mut total = 0u32;
        let mut aromatic = false;
        for &(_, b) in &self.adjacency[atom] {
            let order = self.bonds[b].order;
            total += u32::from(order.valence());
            aromatic |= order == BondOrder::Aromatic;
        }
        if aromatic {
            total += 1;
        }
        total
    }

    /// Hydrogens an unbracketed atom at this position would carry.
    pub fn implicit_hydrogens(&self, atom: usize) -> u8 {
        let valence = u32::from(self.atoms[atom].element.valence());
        valence.saturating_sub(self.consumed_valence(atom)) as u8
    }

    pub fn formula(&self) -> Formula {
        let mut counts = BTreeMap::new();
        let mut hydrogens = 0u32;
        for atom in &self.atoms {
            *counts.entry(atom.element.symbol().to_owned()).or_insert(0) += 1;
            hydrogens += u32::from(atom.hydrogens);
        }
        if hydrogens > 0 {
            counts.insert("H".to_owned(), hydrogens);
        }
        Formula(counts)
    }

    /// Returns a copy whose atom `i` becomes atom `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> MolGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut atoms = self.atoms.clone();
        for (i, &p) in perm.iter().enumerate() {
            atoms[p] = self.atoms[i];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        MolGraph::new(atoms, bonds).expect("relabeling preserves validity")
    }
}

/// Element counts keyed by symbol, hydrogens included under `"H"`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula(pub BTreeMap<String, u32>);

impl Formula {
    pub fn get(&self, symbol: &str) -> u32 {
        self.0.get(symbol).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(|&c| c == 0)
    }

    /// Sum of absolute per-element count differences.
    pub fn distance(&self, other: &Formula) -> u32 {
        let keys: std::collections::BTreeSet<&String> =
            self.0.keys().chain(other.0.keys()).collect();
        keys.into_iter()
            .map(|k| self.get(k).abs_diff(other.get(k)))
            .sum()
    }
}

impl FromStr for Formula {
    type Err = SmilesError;

    /// Parses strings such as `C7H8N2O2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SmilesError::InvalidFormula(s.to_owned());
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.is_empty() {
            return Err(bad());
        }
        let mut counts = BTreeMap::new();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_ascii_uppercase() {
                return Err(bad());
            }
            let mut symbol = chars[i].to_string();
            i += 1;
            if i < chars.len() && chars[i].is_ascii_lowercase() {
                symbol.push(chars[i]);
                i += 1;
            }
            if symbol != "H" && Element::from_symbol(&symbol).is_none() {
                return Err(bad());
            }
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let count = if start == i {
                1
            } else {
                chars[start..i]
                    .iter()
                    .collect::<String>()
                    .parse::<u32>()
                    .map_err(|_| bad())?
            };
            *counts.entry(symbol).or_insert(0) += count;
        }
        Ok(Formula(counts))
    }
}

impl fmt::Display for Formula {
    /// Hill order: C, H, then the rest alphabetically.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut write = |sym: &str, n: u32| -> fmt::Result {
            match n {
                0 => Ok(()),
                1 => write!(f, "{sym}"),
                _ => write!(f, "{sym}{n}"),
            }
        };
        write("C", self.get("C"))?;
        write("H", self.get("H"))?;
        for (sym, &n) in &self.0 {
            if sym != "C" && sym != "H" {
                write(sym, n)?;
            }
        }
        Ok(())
    }
}
