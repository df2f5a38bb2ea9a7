"""Scene-graph dual-encoder image-text matching.

Two independent towers embed images (region features) and captions
(compiled to scene graphs) into one joint space, so retrieval is a single
vector-matrix multiplication against cached embeddings.

Subpackages / modules:
    numcore    dense-math primitives, reverse-mode tape, gradient checker
    sgparse    CoNLL-U ingestion, caption -> scene graph rules, augmentation
    encoders   phrase encoder, region MLP + self-attention, rank pooling
    graphnet   object-attribute / object-object graph attention encoder
    losses     triplet / contrastive / specificity objectives
    training   AdamW loop, batch sampler, checkpoints
    retrieval  embedding index, recall metrics, reranking, latency bench
    synthetic  prototype-based synthetic dataset generator
    cli        parse / train / embed / eval / bench subcommands
"""

__version__ = "0.1.0"
