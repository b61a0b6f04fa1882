_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce "
    "Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn "
    "Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl "
    "Mc Lv Ts Og"
).split()

ATOMIC_NUMBER = {sym: i + 1 for i, sym in enumerate(_SYMBOLS)}

# Default valences for atoms written without brackets.
ORGANIC_VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {**AROMATIC_ORGANIC, "se": "Se", "as": "As", "te": "Te"}


def implicit_hydrogens(element, aromatic, bond_sum):
    """Hydrogens implied for an unbracketed atom, or ``None`` on valence overflow.

    ``bond_sum`` counts aromatic bonds as 1. An aromatic atom donates one more
    valence unit to its ring, but only up to its lowest normal valence.
    """
    valences = ORGANIC_VALENCES[element]
    if aromatic:
        if bond_sum > valences[-1]:
            return None
        return max(0, valences[0] - bond_sum - 1)
    for v in valences:
        if v >= bond_sum:
            return v - bond_sum
    return None
