"""Schema-to-schema crosswalks for messy tabular data.

The package turns undocumented spreadsheets and CSV extracts into
schema-conformant tables by way of small, reviewable transformation
scripts. Every import and transform is hashed so a published output can
be replayed and checked against its source long after the fact.
"""

__version__ = "0.1.0"
