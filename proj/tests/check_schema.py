"""Validates the shipped instances against docs/instance-schema.json."""
import glob
import json
import os
import sys

import jsonschema

root = sys.argv[1]
schema = json.load(open(os.path.join(root, "docs", "instance-schema.json")))
jsonschema.Draft202012Validator.check_schema(schema)
validator = jsonschema.Draft202012Validator(schema)
failed = 0
for path in sorted(glob.glob(os.path.join(root, "data", "*.json"))):
    for err in validator.iter_errors(json.load(open(path))):
        print(f"{path}: {err.json_path}: {err.message}")
        failed += 1
# Structural defects must be caught by the schema alone.
for name in ["02_missing_version", "03_future_version", "04_unknown_section", "05_unknown_cost_type",
             "06_negative_slope", "09_consumer_without_income", "11_unknown_edge_field"]:
    path = os.path.join(root, "tests", "data", "malformed", name + ".json")
    if validator.is_valid(json.load(open(path))):
        print(f"{path}: accepted by the schema")
        failed += 1
sys.exit(1 if failed else 0)
