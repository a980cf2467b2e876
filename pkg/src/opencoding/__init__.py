"""opencoding: an open-coding workbench for online discourse datasets.

Pipeline stages: ingest and chunk a chat corpus, run five ML/GAI coding
approaches, merge codes across codebooks by embedding similarity, then
drive a blind human coverage review with inter-coder reliability and
contribution reports.
"""

__version__ = "0.1.0"
