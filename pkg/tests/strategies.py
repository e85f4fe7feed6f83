from hypothesis import strategies as st

from etale_lab.logic import And, Atomic, Eq, Exists, Not, Or, Signature

SIG = Signature.relational({"P": 1, "R": 2})
VARS = ("x", "y", "z")


def atoms(vars_=VARS):
    v = st.sampled_from(vars_)
    return st.one_of(
        st.builds(lambda a: Atomic("P", (a,)), v),
        st.builds(lambda a, b: Atomic("R", (a, b)), v, v),
        st.builds(Eq, v, v),
    )


def formulas(depth=3, negation=True, vars_=VARS):
    """Formulas over ``SIG`` in the variables ``vars_``; Sigma_1 when ``negation`` is off."""

    def extend(children):
        opts = [
            st.lists(children, max_size=3).map(lambda ps: And(tuple(ps))),
            st.lists(children, max_size=3).map(lambda ps: Or(tuple(ps))),
            st.builds(lambda v, b: Exists(v, "S", b), st.sampled_from(vars_), children),
        ]
        if negation:
            opts.append(children.map(Not))
        return st.one_of(*opts)

    return st.recursive(atoms(vars_), extend, max_leaves=2 ** depth)
