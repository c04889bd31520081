from hypothesis import strategies as st

from semvec.expr import op, var


def tree_strategy(ops, variables, max_depth=4):
    """Hypothesis strategy over expression trees of the given operator table."""
    leaf = st.sampled_from([var(v) for v in variables])
    sigs = list(ops.values())

    def extend(children):
        out = []
        for sig in sigs:
            if sig.arity == 1:
                out.append(st.builds(lambda c, s=sig: op(s.name, c), children))
            else:
                out.append(st.builds(lambda l, r, s=sig: op(s.name, l, r), children, children))
        return st.one_of(out)

    return st.recursive(leaf, extend, max_leaves=2 ** max_depth)
