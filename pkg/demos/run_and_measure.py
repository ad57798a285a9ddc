"""
One scenario, three behaviours
==============================

The same broadcast scenario is played with a silent group, a relaying group and
a coin-flipping group, and the diffusion metrics are compared.
"""

from infocircle import PolicySpec, compute_metrics, make_config, make_policy, run

base = make_config("SH", "BC", "positive", "circle", rng_seed=3)
print("scenario:", base.name)
print("seed text:", base.content.text[:70] + "...")

for spec in [PolicySpec("silent"), PolicySpec("relay_top"), PolicySpec("epidemic", {"p": 0.4})]:
    config = base.with_overrides(policy=spec)
    log = run(config, make_policy(spec))
    report = compute_metrics(log)
    print(f"\n{spec.name}:")
    print(f"  messages sent            {len(log.of_kind('message'))}")
    print(f"  information gap          {report.information_gap:.1f} %")
    print(f"  diffusion gap            {report.diffusion_gap:.1f} %")
    print(f"  conversion gap           {report.diffusion_conversion_gap:.1f} %")
    print(f"  retention (rounds)       {report.information_retention}")
    print(f"  action similarity bias   {report.action_similarity_bias}")

# A silent group knows everything (the broadcast reached all five) but passes
# nothing on, so the whole information gap turns into a conversion gap.
