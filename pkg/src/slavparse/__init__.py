"""Joint POS tagging and dependency parsing for pre-modern Slavic treebanks.

Subpackages and modules:

- :mod:`slavparse.treebank`: CoNLL-U/CoNLL-X data model, IO, validation,
  positional-morphology conversion.
- :mod:`slavparse.corpusops`: corpus manifests, deterministic splitting,
  dataset assembly, token accounting.
- :mod:`slavparse.neuralnet`: minimal reverse-mode autodiff, LSTM/MLP
  building blocks, Adam, gradient checking.
- :mod:`slavparse.kernels`: hot LSTM sequence kernels, numba-jitted with a
  pure-numpy fallback (env flag ``SLAVPARSE_BACKEND``).
- :mod:`slavparse.decoder`: maximum spanning arborescence decoding.
- :mod:`slavparse.jointmodel`: the joint tagger-parser, training, grid
  search, model serialization, prediction.
- :mod:`slavparse.evaluation`: UAS/LAS/UPOS scoring and report tables.
- :mod:`slavparse.cli`: the ``slavparse`` command line tool.
"""

__version__ = "0.1.0"
