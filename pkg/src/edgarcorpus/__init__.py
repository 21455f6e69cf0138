"""Build research corpora from the SEC EDGAR archive.

The pieces compose as: ``EdgarClient`` fetches index and filing files,
``index_parser`` and ``filing_parser`` turn them into rows and documents,
``ObjectStore`` keeps raw bytes content-addressed, ``MetadataStore`` keeps
the relational model, and ``Pipeline`` runs the idempotent ingestion steps.
"""

from .edgar_client import ClientConfig, EdgarClient
from .metadata_store import MetadataStore
from .object_store import ObjectStore
from .pipeline import Pipeline, RunReport

__all__ = ["ClientConfig", "EdgarClient", "MetadataStore", "ObjectStore", "Pipeline", "RunReport"]
__version__ = "0.1.0"
