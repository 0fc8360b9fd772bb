"""Shared fixtures: the council-extract case study and its crosswalk.

The six-row extract, the curated destination schema and the fourteen
mapping scripts are used across the engine, CLI, service and acceptance
tests, so they live here. The extract mirrors a real billing-system
export: inconsistent addresses split over numbered columns, day-first
dates, presence-coded relief flags and amount columns doing double duty
as booleans.
"""
from __future__ import annotations

import pytest

from crosswalk.ingest import write_csv_text
from crosswalk.schema import (
    CategoryTerm,
    FieldConstraints,
    FieldDefinition,
    FieldType,
    SchemaModel,
)
from crosswalk.tabular import Table

SOURCE_COLUMNS = [
    "PropertyID", "UPRN", "RV",
    "PropertyAddr1", "PropertyAddr2", "PropertyAddr3", "PropertyAddr4",
    "PropertyPostcode",
    "AccountHolder1", "AccountHolder2",
    "HolderAddr1", "HolderAddr2", "HolderAddr3", "HolderAddr4",
    "HolderPostcode",
    "LiableFrom", "EmptyFrom",
    "Retail", "SBRR", "Charitable", "Mandatory", "Discretionary",
]

SOURCE_ROWS = [
    ["8171240704001", "60001880", "33750",
     "45 CHARTWELL ROAD", "LANCING BUSINESS PARK", "LANCING", "WEST SUSSEX",
     "BN15 8TU",
     "DAVIS METAL RECYCLING LTD", None,
     "28 BALSDEAN ROAD", "WOODINGDEAN", "BRIGHTON", None, "BN2 6PG",
     "01/04/1995", None,
     "Y", "Y", None, "1250.00", None],
    ["8173620028005", "60005911", "10730",
     "28 NORTH ROAD", "LANCING", "WEST SUSSEX", None,
     "BN15 9BQ",
     "JACOBS STEEL & CO. LIMITED", None,
     "54 CHAPEL ROAD", "WORTHING", "WEST SUSSEX", None, "BN11 1BE",
     "19/10/2012", None,
     None, "Y", None, None, None],
    ["8011200800001", "60031392", "17000",
     "GROUND FLOOR 16/18", "EAST STREET", "SHOREHAM BY SEA", "WEST SUSSEX",
     "BN43 5ZE",
     "TAP HOUSE SHOREHAM LTD", None,
     "THE CORNER HOUSE", "HIGH STREET", "SHOREHAM-BY-SEA", None, "BN43 5DA",
     "20/04/2018", "15/06/2021",
     "Y", None, None, None, None],
    ["803198019006", "60026171", "9800",
     "19 SOUTHWICK SQUARE", "SOUTHWICK", "WEST SUSSEX", None,
     "BN42 4FP",
     "DRURY COFFEE HOUSE LTD", None,
     "262 OLD SHOREHAM ROAD", "PORTSLADE", "BRIGHTON", None, "BN41 1XR",
     "09/08/2018", None,
     None, "Y", None, None, None],
    ["8012720701005", "60014162", "9900",
     "CAR PARK", "MIDDLE STREET", "SHOREHAM-BY-SEA", "WEST SUSSEX",
     "BN43 5DP",
     "ADUR DISTRICT COUNCIL", None,
     "TOWN HALL", "TANGMERE ROAD", None, None, "BN43 6PR",
     "01/04/1995", None,
     None, None, "Y", "500.00", None],
    ["8012720702001", "60014163", "3800",
     "PUBLIC CONVENIENCES", "MIDDLE STREET", "SHOREHAM-BY-SEA", "WEST SUSSEX",
     "BN43 5DP",
     "ADUR DISTRICT COUNCIL", None,
     "TOWN HALL", "TANGMERE ROAD", None, None, "BN43 6PR",
     "01/04/1995", "01/01/2022",
     None, None, None, None, "75.50"],
]

#: The mapping from the extract to the curated register, one action each.
CASE_STUDY_SCRIPTS = [
    "NEW > 'localAuthorityCode' < ['E07000223']",
    "RENAME > 'localBillingReference' < ['PropertyID']",
    "UNITE > 'occupierAccountHolderName' < ' ; ' :: ['AccountHolder1', 'AccountHolder2']",
    "UNITE > 'occupierPropertyAddress' < ' ; ' :: ['PropertyAddr1', 'PropertyAddr2', 'PropertyAddr3', 'PropertyAddr4', 'PropertyPostcode']",
    "UNITE > 'occupierCorrespondenceAddress' < ' ; ' :: ['HolderAddr1', 'HolderAddr2', 'HolderAddr3', 'HolderAddr4', 'HolderPostcode']",
    "RENAME > 'occupierAccountStartDate' < ['LiableFrom']",
    "CATEGORISE > 'occupierOccupationState' :: 'Vacant' < 'EmptyFrom' :: [True]",
    "SELECT > 'occupierOccupationDate' < ['EmptyFrom']",
    "CATEGORISE > 'occupierReliefType' :: 'retail' < 'Retail' :: ['Y']",
    "CATEGORISE > 'occupierReliefType' :: 'small_business' < 'SBRR' :: ['Y']",
    "CATEGORISE > 'occupierReliefType' :: 'charity' < 'Charitable' :: ['Y']",
    "CATEGORISE > 'occupierReliefType' :: 'mandatory' < 'Mandatory' :: [True]",
    "CATEGORISE > 'occupierReliefType' :: 'discretionary' < 'Discretionary' :: [True]",
    "COLLATE > 'occupierReliefAmount' < [~, ~, ~, 'Mandatory', 'Discretionary']",
]

#: The full reference corpus: the case-study mapping plus three scripts
#: from earlier hand-authored workflows, kept exactly as written — note
#: the tight ``::`` spacing, the boolean destination term, and a field
#: name with a significant leading space.
REFERENCE_SCRIPTS = CASE_STUDY_SCRIPTS + [
    "CATEGORISE > 'occupation_state_reliefs'::'other' < "
    "'Current Relief Type'::['Sports Club (Registered CASC)', 'Mandatory']",
    "CATEGORISE > 'occupation_state'::True < ' EmptyFrom'::[True]",
    "RENAME > 'occupation_state_date' < ['EmptyFrom']",
]


def _terms(*names: str) -> FieldConstraints:
    return FieldConstraints(categories=tuple(CategoryTerm(n) for n in names))


def build_dest_schema() -> SchemaModel:
    return SchemaModel(name="ratings-register", fields=(
        FieldDefinition("localAuthorityCode", FieldType.STRING,
                        constraints=FieldConstraints(required=True)),
        FieldDefinition("localBillingReference", FieldType.STRING,
                        constraints=FieldConstraints(required=True, unique=True)),
        FieldDefinition("occupierAccountHolderName", FieldType.STRING),
        FieldDefinition("occupierPropertyAddress", FieldType.STRING),
        FieldDefinition("occupierCorrespondenceAddress", FieldType.STRING),
        FieldDefinition("occupierAccountStartDate", FieldType.DATE),
        FieldDefinition("occupierOccupationState", FieldType.CATEGORY,
                        constraints=_terms("Vacant", "Occupied")),
        FieldDefinition("occupierOccupationDate", FieldType.DATE),
        FieldDefinition("occupierReliefType", FieldType.ARRAY,
                        constraints=_terms("retail", "small_business", "charity",
                                           "mandatory", "discretionary")),
        FieldDefinition("occupierReliefAmount", FieldType.ARRAY),
    ))


def build_source_table() -> Table:
    return Table.from_rows(SOURCE_COLUMNS, SOURCE_ROWS)


@pytest.fixture
def source_table() -> Table:
    return build_source_table()


@pytest.fixture
def dest_schema() -> SchemaModel:
    return build_dest_schema()


@pytest.fixture
def extract_csv(tmp_path):
    """The case-study extract written to disk as RFC-4180 CSV."""
    path = tmp_path / "extract.csv"
    path.write_text(write_csv_text(build_source_table()), "utf-8")
    return path


@pytest.fixture
def case_study_scripts() -> list[str]:
    return list(CASE_STUDY_SCRIPTS)


@pytest.fixture
def reference_scripts() -> list[str]:
    return list(REFERENCE_SCRIPTS)
