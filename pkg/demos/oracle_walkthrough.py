"""
Static oracle and SWAP on a small non-projective tree
=====================================================

"""

from mtparser.transition import GoldTree, dynamic_costs, initial_config, is_projective, projective_order, static_oracle, trace_lines

# heads of four words, 0 is the root; word 3 heads word 1 across the root arc
heads = [3, 0, 2, 2]
labels = [0, 1, 2, 3]
g = GoldTree(heads, labels)
print("projective:", is_projective(heads))
print("projective order:", projective_order(g))

# the oracle reorders words with SWAP until the projective order is reached
seq = static_oracle(g)
print("\n".join(trace_lines(len(heads), seq)))

# costs along the derivation: the oracle's choice and every alternative
c = initial_config(len(heads))
for t in seq[:6]:
    costs = {k.name: v for k, v in dynamic_costs(c, g).items()}
    print(f"{t.kind.name:10s} {costs}")
    c.step(t)
