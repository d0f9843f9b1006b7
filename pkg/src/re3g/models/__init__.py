from .encoder import TextEncoder, pad_batch
from .seq2seq import Seq2SeqModel

__all__ = ["Seq2SeqModel", "TextEncoder", "pad_batch"]
