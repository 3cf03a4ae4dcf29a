"""Realtime spatiotemporal topic modeling and curiosity-driven exploration."""
from .core import (UNLABELED, CellKey, GridBounds, Labeling, NeighborhoodConfig, Vocabulary,
                   cell_of, make_rng, neighbors)
from .evaluation import (ExperimentConfig, batch_oracle_labeling, entropy, mann_whitney,
                         mutual_information, run_experiment)
from .exploration import (ExplorationState, Policy, next_step, repulsive_potential, run_exploration,
                          step_weights, write_trace_csv)
from .perplexity import path_topic_distribution, topic_perplexity, word_perplexity
from .topic_model import (ModelConfig, RefinementConfig, TopicModel, batch_refine, fold_in_label,
                          gibbs_conditional, phi, pick_refinement_time, realtime_refine, resample_cell, theta)
from .world import (TerrainSpec, WordMap, generate_synthetic_map, load_word_map, observe,
                    rare_trail_spec, save_word_map, terrain_distributions, tokenize_image,
                    train_codebook)

__version__ = "0.1.0"
