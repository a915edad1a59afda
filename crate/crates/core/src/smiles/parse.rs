use std::collections::BTreeMap;

use log::warn;

use super::graph::{Atom, Bond, BondOrder, Element, MolGraph};
use super::SmilesError;

/// Parses a single-fragment SMILES string into a molecular graph.
///
/// Unbracketed atoms receive implicit hydrogens from the valence table;
/// bracket atoms keep exactly the hydrogens written. Unmarked bonds between
/// two aromatic atoms are aromatic when they sit on a ring and single
/// otherwise.
pub fn parse(smiles: &str) -> Result<MolGraph, SmilesError> {
    Parser::new(smiles).run()
}

#[derive(Debug, Clone, Copy)]
struct ParsedAtom {
    element: Element,
    aromatic: bool,
    charge: i8,
    /// `None` for unbracketed atoms.
    hydrogens: Option<u8>,
}

#[derive(Debug, Clone, Copy)]
struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<ParsedAtom>,
    /// Bonds with an explicit order, or `None` when left to the default rule.
    bonds: Vec<(usize, usize, Option<BondOrder>)>,
    prev: Option<usize>,
    branches: Vec<(usize, usize)>,
    rings: BTreeMap<u16, RingOpen>,
    pending: Option<(BondOrder, usize)>,
    /// Set right after '(' until an atom appears, to reject empty branches.
    branch_open: bool,
    stereo_warned: bool,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            branches: Vec::new(),
            rings: BTreeMap::new(),
            pending: None,
            branch_open: false,
            stereo_warned: false,
        }
    }

    fn unexpected(&self, offset: usize) -> SmilesError {
        let ch = self.src[offset..].chars().next().unwrap_or('\0');
        SmilesError::UnexpectedCharacter { ch, offset }
    }

    fn note_stereo(&mut self) {
        if !self.stereo_warned {
            warn!("stereo marks in {:?} are ignored", self.src);
            self.stereo_warned = true;
        }
    }

    fn run(mut self) -> Result<MolGraph, SmilesError> {
        if self.src.trim().is_empty() {
            return Err(SmilesError::EmptyInput);
        }
        while self.pos < self.bytes.len() {
            let offset = self.pos;
            let c = self.bytes[offset];
            match c {
                b'(' => {
                    if self.prev.is_none() || self.pending.is_some() || self.branch_open {
                        return Err(self.unexpected(offset));
                    }
                    self.branches.push((self.prev.unwrap(), offset));
                    self.branch_open = true;
                    self.pos += 1;
                }
                b')' => {
                    if let Some((_, at)) = self.pending {
                        return Err(SmilesError::DanglingBond { offset: at });
                    }
                    if self.branch_open {
                        return Err(self.unexpected(offset));
                    }
                    let (atom, _) = self
                        .branches
                        .pop()
                        .ok_or(SmilesError::UnbalancedParenthesis { offset })?;
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.unexpected(offset));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        b'/' | b'\\' => {
                            self.note_stereo();
                            BondOrder::Single
                        }
                        _ => BondOrder::Single,
                    };
                    self.pending = Some((order, offset));
                    self.pos += 1;
                }
                b'.' => return Err(SmilesError::MultipleFragments { offset }),
                b'0'..=b'9' | b'%' => {
                    let label = self.ring_label()?;
                    self.ring_bond(label, offset)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom);
                }
                _ if c.is_ascii_alphabetic() => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom);
                }
                _ => return Err(self.unexpected(offset)),
            }
        }
        if let Some((_, offset)) = self.pending {
            return Err(SmilesError::DanglingBond { offset });
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(SmilesError::UnbalancedParenthesis { offset });
        }
        if let Some((&label, open)) = self.rings.iter().next() {
            return Err(SmilesError::UnmatchedRingClosure {
                label,
                offset: open.offset,
            });
        }
        if self.atoms.is_empty() {
            return Err(SmilesError::EmptyInput);
        }
        self.build()
    }

    fn add_atom(&mut self, atom: ParsedAtom) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(p) = self.prev {
            let order = self.pending.take().map(|(o, _)| o);
            self.bonds.push((p, idx, order));
        }
        self.prev = Some(idx);
        self.branch_open = false;
    }

    fn ring_label(&mut self) -> Result<u16, SmilesError> {
        let offset = self.pos;
        if self.bytes[offset] == b'%' {
            let digits = self.bytes.get(offset + 1..offset + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(u16::from(d[0] - b'0') * 10 + u16::from(d[1] - b'0'))
                }
                _ => Err(self.unexpected(offset)),
            }
        } else {
            self.pos += 1;
            Ok(u16::from(self.bytes[offset] - b'0'))
        }
    }

    fn ring_bond(&mut self, label: u16, offset: usize) -> Result<(), SmilesError> {
        let atom = match self.prev {
            Some(a) if !self.branch_open => a,
            _ => return Err(self.unexpected(offset)),
        };
        let order = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            Some(open) => {
                if open.atom == atom {
                    return Err(SmilesError::SelfBond { label });
                }
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(SmilesError::RingBondMismatch { label })
                    }
                    (a, b) => a.or(b),
                };
                self.bonds.push((open.atom, atom, order));
            }
            None => {
                self.rings.insert(
                    label,
                    RingOpen {
                        atom,
                        order,
                        offset,
                    },
                );
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let offset = self.pos;
        let rest = &self.bytes[offset..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (Element::Cl, false, 2),
            [b'B', b'r', ..] => (Element::Br, false, 2),
            [b'B', ..] => (Element::B, false, 1),
            [b'C', ..] => (Element::C, false, 1),
            [b'N', ..] => (Element::N, false, 1),
            [b'O', ..] => (Element::O, false, 1),
            [b'P', ..] => (Element::P, false, 1),
            [b'S', ..] => (Element::S, false, 1),
            [b'F', ..] => (Element::F, false, 1),
            [b'I', ..] => (Element::I, false, 1),
            [b'b', ..] => (Element::B, true, 1),
            [b'c', ..] => (Element::C, true, 1),
            [b'n', ..] => (Element::N, true, 1),
            [b'o', ..] => (Element::O, true, 1),
            [b'p', ..] => (Element::P, true, 1),
            [b's', ..] => (Element::S, true, 1),
            _ => {
                let symbol = self.src[offset..].chars().take(1).collect();
                return Err(SmilesError::UnknownElement { symbol, offset });
            }
        };
        self.pos += len;
        Ok(ParsedAtom {
            element,
            aromatic,
            charge: 0,
            hydrogens: None,
        })
    }

    fn bracket_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let start = self.pos;
        let bad = SmilesError::InvalidBracketAtom { offset: start };
        let end = self.src[start..]
            .find(']')
            .map(|i| start + i)
            .ok_or_else(|| bad.clone())?;
        let body = &self.src[start + 1..end];
        self.pos = end + 1;
        let b = body.as_bytes();
        let mut i;
        if b.first().is_some_and(u8::is_ascii_digit) {
            // isotopes are not supported
            return Err(bad);
        }
        let (element, aromatic) = {
            let two = body.get(0..2);
            let one = body.get(0..1).ok_or_else(|| bad.clone())?;
            let two_letter = two.is_some_and(|t| {
                let t = t.as_bytes();
                t[0].is_ascii_uppercase() && t[1].is_ascii_lowercase()
            });
            if let Some(e) = two.filter(|_| two_letter).and_then(Element::from_symbol) {
                i = 2;
                (e, false)
            } else if let Some(e) = Element::from_symbol(one).filter(|_| !two_letter) {
                i = 1;
                (e, false)
            } else if let Some(e) = Element::from_symbol(&one.to_ascii_uppercase())
                .filter(|e| e.can_be_aromatic() && one.as_bytes()[0].is_ascii_lowercase())
            {
                i = 1;
                (e, true)
            } else {
                let symbol: String = body
                    .chars()
                    .take_while(|c| c.is_ascii_alphabetic())
                    .take(2)
                    .collect();
                return Err(SmilesError::UnknownElement {
                    symbol,
                    offset: start + 1,
                });
            }
        };
        while i < b.len() && b[i] == b'@' {
            self.note_stereo();
            i += 1;
        }
        let mut hydrogens = 0u8;
        if i < b.len() && b[i] == b'H' {
            i += 1;
            let s = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            hydrogens = if s == i {
                1
            } else {
                body[s..i].parse().map_err(|_| bad.clone())?
            };
        }
        let mut charge = 0i8;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            let sign = b[i];
            let mut magnitude = 1i8;
            i += 1;
            if i < b.len() && b[i].is_ascii_digit() {
                let s = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                magnitude = body[s..i].parse().map_err(|_| bad.clone())?;
            } else {
                while i < b.len() && b[i] == sign {
                    magnitude += 1;
                    i += 1;
                }
            }
            charge = if sign == b'+' { magnitude } else { -magnitude };
        }
        if i != b.len() {
            return Err(bad);
        }
        Ok(ParsedAtom {
            element,
            aromatic,
            charge,
            hydrogens: Some(hydrogens),
        })
    }

    fn build(self) -> Result<MolGraph, SmilesError> {
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .map(|p| Atom {
                element: p.element,
                aromatic: p.aromatic,
                charge: p.charge,
                hydrogens: p.hydrogens.unwrap_or(0),
            })
            .collect();
        let bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|&(a, b, order)| {
                let both_aromatic = atoms[a].aromatic && atoms[b].aromatic;
                let order = order.unwrap_or(if both_aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                });
                Bond { a, b, order }
            })
            .collect();
        for bond in &bonds {
            if bond.order == BondOrder::Aromatic
                && !(atoms[bond.a].aromatic && atoms[bond.b].aromatic)
            {
                return Err(SmilesError::InvalidAromaticBond(bond.a, bond.b));
            }
        }
        let mut g = MolGraph::new(atoms, bonds)?;

        // aromatic bonds only live on rings
        let ring = g.ring_bonds();
        for (bond, &in_ring) in g.bonds_mut().iter_mut().zip(&ring) {
            if bond.order == BondOrder::Aromatic && !in_ring {
                bond.order = BondOrder::Single;
            }
        }
        let ring_atoms = g.ring_atoms();
        for (i, atom) in g.atoms().iter().enumerate() {
            if atom.aromatic && !ring_atoms[i] {
                return Err(SmilesError::AromaticOutsideRing { atom: i });
            }
        }
        let hydrogens: Vec<Option<u8>> = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, p)| match p.hydrogens {
                Some(_) => None,
                None => Some(g.implicit_hydrogens(i)),
            })
            .collect();
        for (atom, h) in g.atoms_mut().iter_mut().zip(hydrogens) {
            if let Some(h) = h {
                atom.hydrogens = h;
            }
        }
        Ok(g)
    }
}
