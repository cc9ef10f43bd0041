"""
Driving experiments from the command line
=========================================

Writes a configuration, validates it, runs it twice and re-scores the stored result.
Equivalent shell commands are printed alongside.
"""
import json

from dcqd_lab import cli

config = {
    "schema_version": 1,
    "protocol": "dcqd",
    "channel": {"kind": "amplitude_damping", "p": 0.6},
    "shots": 250,
    "seed": 7,
    "bootstrap_resamples": 20,
}
with open("dcqd_config.json", "w") as fh:
    json.dump(config, fh, indent=2)

print("$ dcqd-lab validate --config dcqd_config.json")
cli.main(["validate", "--config", "dcqd_config.json"])

print("$ dcqd-lab run --config dcqd_config.json --out result.json --no-runtime")
code = cli.main(["run", "--config", "dcqd_config.json", "--out", "result.json", "--no-runtime"])
print("exit code", code)

with open("result.json") as fh:
    doc = json.load(fh)
cli.validate_result(doc)
print(f"fidelity {doc['fidelity']:.4f} +- {doc['fidelity_std_error']:.4f}, re-scored {cli.rescore(doc):.4f}")

print("$ dcqd-lab export-bloch result.json --out bloch.csv")
cli.main(["export-bloch", "result.json", "--out", "bloch.csv"])

# relaxation times through the same interface
with open("dcrt_config.json", "w") as fh:
    json.dump({"protocol": "dcrt", "shots": 250, "seed": 0, "dcrt_params": {"T1": 1.130, "T2": 0.0188}}, fh)
cli.main(["run", "--config", "dcrt_config.json", "--out", "dcrt_result.json", "--no-runtime"])
with open("dcrt_result.json") as fh:
    print("dcrt relative errors:", json.load(fh)["relative_error"])
