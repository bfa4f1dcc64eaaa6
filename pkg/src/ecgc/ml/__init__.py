"""Learning primitives: boosted trees, the recurrent sequence classifier and LDA."""
from .gbt import GbtHyperParams, GbtModel, gbt_predict_proba, gbt_train
from .lda import LdaModel, lda_predict, lda_train
from .sequence import SeqHyperParams, SequenceModel, seq_predict_proba, seq_train

__all__ = ["GbtHyperParams", "GbtModel", "gbt_predict_proba", "gbt_train", "LdaModel",
           "lda_predict", "lda_train", "SeqHyperParams", "SequenceModel", "seq_predict_proba",
           "seq_train"]
