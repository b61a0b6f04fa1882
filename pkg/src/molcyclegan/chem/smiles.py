"""SMILES reader.

Supports the organic subset, bracket atoms (isotope, chirality and atom
class are read and dropped), bond symbols ``- = # : / \\``, aromatic
lowercase atoms, ring closures (``1``..``9`` and ``%nn``) and branches.
Disconnected inputs (``.``) are rejected.
"""
from .elements import AROMATIC_BRACKET, AROMATIC_ORGANIC, ATOMIC_NUMBER, ORGANIC_VALENCES, implicit_hydrogens
from .graph import Atom, Bond, MolGraph

_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": "aromatic", "/": 1, "\\": 1}


class SmilesError(ValueError):
    def __init__(self, message, smiles="", offset=None):
        self.smiles = smiles
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}: {smiles!r}")


class _Reader:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.atoms = []          # dicts while parsing
        self.atom_offsets = []
        self.bonds = {}          # (i, j) -> (order or "aromatic" or None, offset)
        self.open_rings = {}     # ring number -> (atom, bond symbol, offset)

    def error(self, message, offset=None):
        raise SmilesError(message, self.text, self.pos if offset is None else offset)

    def parse(self):
        text = self.text
        prev = None
        pending_bond = None
        pending_offset = None
        stack = []
        while self.pos < len(text):
            ch = text[self.pos]
            start = self.pos
            if ch == "(":
                if prev is None:
                    self.error("branch opened before any atom")
                if pending_bond is not None:
                    self.error("bond symbol before branch")
                stack.append((prev, start))
                self.pos += 1
            elif ch == ")":
                if not stack:
                    self.error("unbalanced ')'")
                if pending_bond is not None:
                    self.error("dangling bond symbol before ')'")
                prev = stack.pop()[0]
                self.pos += 1
            elif ch in _BOND_SYMBOLS:
                if pending_bond is not None:
                    self.error("two consecutive bond symbols")
                if prev is None:
                    self.error("bond symbol before any atom")
                pending_bond, pending_offset = ch, start
                self.pos += 1
            elif ch == "$":
                self.error("quadruple bonds are not supported")
            elif ch == ".":
                self.error("disconnected structures ('.') are not supported")
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    self.error("ring closure before any atom")
                if ch == "%":
                    digits = text[self.pos + 1:self.pos + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        self.error("'%' must be followed by two digits")
                    number = int(digits)
                    self.pos += 3
                else:
                    number = int(ch)
                    self.pos += 1
                self._ring(number, prev, pending_bond, start)
                pending_bond = None
            else:
                idx = self._atom()
                if prev is not None:
                    self._add_bond(prev, idx, pending_bond, pending_offset if pending_bond else start)
                elif pending_bond is not None:
                    self.error("bond symbol before first atom", pending_offset)
                pending_bond = None
                prev = idx
        if pending_bond is not None:
            self.error("dangling bond symbol at end of input", pending_offset)
        if stack:
            self.error("unbalanced '('", stack[-1][1])
        if self.open_rings:
            number, (_, _, offset) = min(self.open_rings.items(), key=lambda kv: kv[1][2])
            self.error(f"unclosed ring {number}", offset)
        if not self.atoms:
            self.error("no atoms", 0)
        return self._build()

    def _ring(self, number, atom, bond_symbol, offset):
        if number in self.open_rings:
            other, other_symbol, other_offset = self.open_rings.pop(number)
            if other == atom:
                self.error("ring closure to the same atom", offset)
            if bond_symbol and other_symbol and _BOND_SYMBOLS[bond_symbol] != _BOND_SYMBOLS[other_symbol]:
                self.error(f"conflicting bond symbols on ring closure {number}", offset)
            self._add_bond(other, atom, bond_symbol or other_symbol, offset)
        else:
            self.open_rings[number] = (atom, bond_symbol, offset)

    def _add_bond(self, i, j, symbol, offset):
        key = (min(i, j), max(i, j))
        if key in self.bonds:
            self.error("duplicate bond between the same atoms", offset)
        self.bonds[key] = (_BOND_SYMBOLS[symbol] if symbol else None, offset)

    def _atom(self):
        text = self.text
        start = self.pos
        if text[start] == "[":
            end = text.find("]", start)
            if end < 0:
                self.error("unterminated bracket atom")
            atom = self._bracket(text[start + 1:end], start)
            self.pos = end + 1
        else:
            two = text[start:start + 2]
            if two in ("Cl", "Br"):
                atom = {"element": two, "aromatic": False, "charge": 0, "h": None}
                self.pos += 2
            elif text[start] in ORGANIC_VALENCES:
                atom = {"element": text[start], "aromatic": False, "charge": 0, "h": None}
                self.pos += 1
            elif text[start] in AROMATIC_ORGANIC:
                atom = {"element": AROMATIC_ORGANIC[text[start]], "aromatic": True, "charge": 0, "h": None}
                self.pos += 1
            else:
                self.error(f"unexpected character {text[start]!r}")
        self.atoms.append(atom)
        self.atom_offsets.append(start)
        return len(self.atoms) - 1

    def _bracket(self, body, offset):
        i = 0
        while i < len(body) and body[i].isdigit():
            i += 1
        rest = body[i:]
        symbol = None
        aromatic = False
        for cand in (rest[:2], rest[:1]):
            if cand in AROMATIC_BRACKET:
                symbol, aromatic = AROMATIC_BRACKET[cand], True
            elif cand in ATOMIC_NUMBER:
                symbol = cand
            else:
                continue
            i += len(cand)
            break
        if symbol is None:
            self.error(f"unknown element in bracket atom [{body}]", offset)
        if i < len(body) and body[i] == "@":
            i += 1
            if i < len(body) and body[i] == "@":
                i += 1
            while i < len(body) and (body[i].isupper() and body[i] != "H" or body[i].isdigit()):
                i += 1
        h = 0
        if i < len(body) and body[i] == "H":
            i += 1
            h = 1
            if i < len(body) and body[i].isdigit():
                h = int(body[i])
                i += 1
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            i += 1
            if i < len(body) and body[i].isdigit():
                j = i
                while j < len(body) and body[j].isdigit():
                    j += 1
                charge = sign * int(body[i:j])
                i = j
            else:
                charge = sign
                while i < len(body) and body[i] == ("+" if sign > 0 else "-"):
                    charge += sign
                    i += 1
        if i < len(body) and body[i] == ":":
            i += 1
            while i < len(body) and body[i].isdigit():
                i += 1
        if i != len(body):
            self.error(f"malformed bracket atom [{body}]", offset)
        return {"element": symbol, "aromatic": aromatic, "charge": charge, "h": h}

    def _build(self):
        bonds = []
        for (i, j), (order, _) in sorted(self.bonds.items()):
            a_i, a_j = self.atoms[i], self.atoms[j]
            if order == "aromatic":
                if not (a_i["aromatic"] and a_j["aromatic"]):
                    self.error("aromatic bond between non-aromatic atoms", self.bonds[(i, j)][1])
                bonds.append(Bond(i, j, 1, True))
            elif order is None:
                both = a_i["aromatic"] and a_j["aromatic"]
                bonds.append(Bond(i, j, 1, both))
            else:
                bonds.append(Bond(i, j, order, False))
        provisional = MolGraph([Atom(a["element"], a["aromatic"], a["charge"], 0) for a in self.atoms], bonds)
        ring = provisional.ring_bonds
        # an aromatic bond outside every ring (biphenyl link written without '-') is single
        bonds = [b if not b.aromatic or k in ring else Bond(b.a, b.b, 1, False) for k, b in enumerate(bonds)]
        sums = [0] * len(self.atoms)
        for b in bonds:
            o = 1 if b.aromatic else b.order
            sums[b.a] += o
            sums[b.b] += o
        atoms = []
        for idx, a in enumerate(self.atoms):
            h = a["h"]
            if h is None:
                h = implicit_hydrogens(a["element"], a["aromatic"], sums[idx])
                if h is None:
                    self.error(f"valence exceeded on {a['element']}", self.atom_offsets[idx])
            atoms.append(Atom(a["element"], a["aromatic"], a["charge"], h))
        graph = MolGraph(atoms, bonds)
        if graph.components() > 1:
            self.error("disconnected structure", 0)
        return graph


def parse_smiles(text):
    """Parse a SMILES string into a :class:`MolGraph`; raises :class:`SmilesError`."""
    if not isinstance(text, str) or not text.strip():
        raise SmilesError("empty SMILES", str(text), 0)
    return _Reader(text.strip()).parse()
