"""
Two treebanks, one construction, two analyses
=============================================

Treebank A attaches a clause after the object to the verb (ccomp); treebank
B attaches it to the noun (acl:relcl).  A single model trained on both has
to pick one convention, while a treebank embedding lets it keep both.
"""

from mtparser.conllu import write_conllu
from mtparser.evaluate import las
from mtparser.neural import Hyperparameters
from mtparser.strategies import StrategyConfig, TreebankSpec, parse_with, train
from mtparser.synthetic import conflict_corpus, conflict_tokens

# same word sequences, different trees
print(write_conllu(conflict_corpus(1, "A", seed=3)))
print(write_conllu(conflict_corpus(1, "B", seed=3)))

data = {s: (conflict_corpus(300, s, seed=10 + i), conflict_corpus(100, s, seed=20 + i)) for i, s in enumerate("AB")}
treebanks = [TreebankSpec(s, tr, dev) for s, (tr, dev) in data.items()]
dims = Hyperparameters(dim_word=32, dim_char=12, hidden_char=16, hidden_word=48, mlp_hidden=64)

concat = train(StrategyConfig("concat", treebanks, epochs=8, seed=1, hyper=dims))
tbemb = train(StrategyConfig("tbemb", treebanks, epochs=8, seed=1, hyper=dims))

# the concat model gets about half of the conflicting words right
for s, (_, dev) in data.items():
    conflict = las(dev, parse_with(concat, dev), tokens=lambda i, g: conflict_tokens(g)).las
    print(f"{s}: concat {las(dev, parse_with(concat, dev)).las:.1f} (conflict words {conflict:.1f}), "
          f"tbemb {las(dev, parse_with(tbemb, dev, s)).las:.1f}")

# parsing treebank B's text as if it were A gives A's analysis
dev_b = data["B"][1][:1]
print(write_conllu(parse_with(tbemb, dev_b, "A")))
