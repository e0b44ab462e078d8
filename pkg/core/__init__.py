"""Model engine: choice probabilities, fixed points, simulators and the experiment harness."""
