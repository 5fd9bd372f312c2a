"""Dual-track RAG evaluation harness.

Builds a searchable knowledge base from a document corpus, generates binary
QA datasets by logical derivation over factual triples, runs every question
through a baseline track and a retrieval-augmented track with resource
profiling, and reduces the results to two standardized metrics
(accuracy Improvements, efficiency Transformation) with per-domain reports.
"""

__version__ = "0.1.0"

from .corpus import Chunk, Document, DomainTag  # noqa: F401
from .embedding import EmbedderConfig, HashEmbedder, RemoteEmbedder  # noqa: F401
from .grader import Judgment, LexicalGrader, score  # noqa: F401
from .metrics import EnhancementReport, TrackSummary, Weights, improvements, ratios, transformation  # noqa: F401
from .profiler import FakeClock, Profiler, RealClock, ResourceSample  # noqa: F401
from .provider import GenerationRequest, GenerationResponse, MockProvider, RemoteChatProvider  # noqa: F401
from .testgen import QAItem, RelationMeta, Triple, derive, generate_qa, load_triples  # noqa: F401
from .vindex import Hit, KnowledgeBase, build, load, save, search  # noqa: F401
