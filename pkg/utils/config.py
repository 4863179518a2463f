import os
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from core.params import (ExplorationConfig, ExplorationParams, FrontendParams, LoopClosureParams,
                         MappingParams, NoveltyParams, PlannerParams, SensorModel)
from utils.errors import ConfigError, InvalidInputError

ENV_PREFIX = 'EXPLORE_'

# key -> (type, lower bound, upper bound); bounds are inclusive, None means open
KEY_SPECS = {
    # Sensor
    'sensor_fov': (float, 1e-9, 2.0 * math.pi),
    'sensor_max_range': (float, 1e-9, None),
    'range_noise_std': (float, 0.0, None),
    'bearing_noise_std': (float, 0.0, None),
    'odom_noise_x': (float, 0.0, None),
    'odom_noise_y': (float, 0.0, None),
    'odom_noise_theta': (float, 0.0, None),

    # Loop closure and novelty
    'n_p_min': (int, 1, None),
    'n_p_max': (int, 1, None),
    'novelty_radius': (float, 1e-9, None),

    # Frontend
    'theta_covis': (int, 1, None),
    'damping': (float, 0.0, None),

    # Mapping
    'resolution': (float, 1e-6, None),
    'grid_margin': (float, 0.0, None),
    'bandwidth': (float, 1e-9, None),
    'min_info_radius_cells': (int, 0, None),
    'max_age': (int, 0, None),
    'rrt_step': (float, 1e-9, None),
    'rrt_iterations': (int, 0, None),

    # Planner
    'inflation_radius': (float, 0.0, None),
    'inscribed_radius': (float, 0.0, None),
    'vertex_spacing': (float, 1e-9, None),

    # Exploration loop
    'epoch_cap': (int, 1, None),
    'sense_interval': (float, 1e-9, None),
    'jobs': (int, 1, None),
    'record_wall_time': (bool, None, None),
    'bootstrap_turn': (float, -math.pi, math.pi),
}

DEFAULTS = {
    'sensor_fov': repr(2.0 * math.pi),
    'sensor_max_range': '4.0',
    'range_noise_std': '0.02',
    'bearing_noise_std': '0.01',
    'odom_noise_x': '0.01',
    'odom_noise_y': '0.01',
    'odom_noise_theta': '0.005',
    'n_p_min': '3',
    'n_p_max': '6',
    'novelty_radius': '1.5',
    'theta_covis': '3',
    'damping': '1e-09',
    'resolution': '0.1',
    'grid_margin': '0.5',
    'bandwidth': '0.75',
    'min_info_radius_cells': '10',
    'max_age': '3',
    'rrt_step': '0.5',
    'rrt_iterations': '150',
    'inflation_radius': '0.3',
    'inscribed_radius': '0.15',
    'vertex_spacing': '1.0',
    'epoch_cap': '200',
    'sense_interval': '0.5',
    'jobs': '1',
    'record_wall_time': 'true',
    'bootstrap_turn': repr(0.5 * math.pi + 0.3),
}

TRUE_WORDS = {'1', 'true', 'yes', 'on'}
FALSE_WORDS = {'0', 'false', 'no', 'off'}


def _coerce(kind, value: Any):
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    if kind is bool:
        if text.lower() in TRUE_WORDS:
            return True
        if text.lower() in FALSE_WORDS:
            return False
        raise ValueError(f"not a boolean: {text}")
    if kind is int:
        return int(text)
    result = float(text)
    if not math.isfinite(result):
        raise ValueError(f"not a finite number: {text}")
    return result


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Config:
    """Configuration for the exploration simulator"""

    def __init__(self, config_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 environ: Optional[Mapping[str, str]] = None):
        self.config: Dict[str, Any] = {}
        self.config_file = Path(config_file) if config_file else None
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.environ = os.environ if environ is None else environ
        self._load_config()

    def _load_config(self):
        """Load configuration: defaults, then file, then environment, then overrides"""
        # Set defaults
        self._set_defaults()

        # Load from the key = value file if one was given
        self._load_from_file()

        # Load from environment variables
        self._load_from_env()

        # Explicit overrides (command-line flags) win
        for key, value in self.overrides.items():
            self._set_known(key, value, 'override')

        # Validate configuration
        self._validate_config()

    def _set_defaults(self):
        """Set default values for every key"""
        self.config.update(DEFAULTS)

    def _set_known(self, key: str, value: Any, source: str):
        if key not in KEY_SPECS:
            logging.warning(f"Ignoring unknown configuration key '{key}' from {source}")
            return
        self.config[key] = value

    def _load_from_file(self):
        """Load a flat key = value file with # comments"""
        if self.config_file is None:
            return
        if not self.config_file.exists():
            raise FileNotFoundError(f"config file not found: {self.config_file}")
        values = dotenv_values(self.config_file)
        for key, value in values.items():
            if value is None:
                logging.warning(f"Configuration key '{key}' in {self.config_file} has no value")
                continue
            self._set_known(key.strip().lower(), value, str(self.config_file))
        logging.debug(f"Configuration loaded from {self.config_file}")

    def _load_from_env(self):
        """Load EXPLORE_<KEY> environment variables"""
        for key in KEY_SPECS:
            value = self.environ.get(ENV_PREFIX + key.upper())
            if value is not None:
                self.config[key] = value

    def _validate_config(self):
        """Coerce every value to its type; unparsable values fall back to the default"""
        for key, (kind, lower, upper) in KEY_SPECS.items():
            try:
                value = _coerce(kind, self.config[key])
            except (TypeError, ValueError):
                logging.warning(f"Invalid {kind.__name__} value for {key}: {self.config[key]}")
                value = _coerce(kind, DEFAULTS[key])
            if lower is not None and value < lower:
                raise ConfigError(f"{key} = {value} is below its minimum {lower}")
            if upper is not None and value > upper:
                raise ConfigError(f"{key} = {value} is above its maximum {upper}")
            self.config[key] = value
        if self.config['n_p_min'] > self.config['n_p_max']:
            raise ConfigError(f"n_p_min ({self.config['n_p_min']}) exceeds n_p_max ({self.config['n_p_max']})")

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value"""
        return self.config.get(key, default)

    def get_sensor_model(self) -> SensorModel:
        return SensorModel(
            fov=self.get('sensor_fov'),
            max_range=self.get('sensor_max_range'),
            range_noise_std=self.get('range_noise_std'),
            bearing_noise_std=self.get('bearing_noise_std'),
            odom_noise_std=(self.get('odom_noise_x'), self.get('odom_noise_y'), self.get('odom_noise_theta')),
        )

    def get_loop_closure_params(self) -> LoopClosureParams:
        return LoopClosureParams(self.get('n_p_min'), self.get('n_p_max'))

    def get_novelty_params(self) -> NoveltyParams:
        return NoveltyParams(self.get('novelty_radius'))

    def get_frontend_params(self) -> FrontendParams:
        return FrontendParams(self.get('theta_covis'), self.get('damping'))

    def get_mapping_params(self) -> MappingParams:
        return MappingParams(
            resolution=self.get('resolution'),
            grid_margin=self.get('grid_margin'),
            bandwidth=self.get('bandwidth'),
            min_info_radius_cells=self.get('min_info_radius_cells'),
            max_age=self.get('max_age'),
            rrt_step=self.get('rrt_step'),
            rrt_iterations=self.get('rrt_iterations'),
        )

    def get_planner_params(self) -> PlannerParams:
        return PlannerParams(self.get('inflation_radius'), self.get('inscribed_radius'), self.get('vertex_spacing'))

    def get_exploration_params(self) -> ExplorationParams:
        return ExplorationParams(
            epoch_cap=self.get('epoch_cap'),
            sense_interval=self.get('sense_interval'),
            jobs=self.get('jobs'),
            record_wall_time=self.get('record_wall_time'),
            bootstrap_turn=self.get('bootstrap_turn'),
        )

    def get_exploration_config(self) -> ExplorationConfig:
        """All parameter records, bundled for run_episode"""
        try:
            return ExplorationConfig(
                sensor=self.get_sensor_model(),
                loop_closure=self.get_loop_closure_params(),
                novelty=self.get_novelty_params(),
                frontend=self.get_frontend_params(),
                mapping=self.get_mapping_params(),
                planner=self.get_planner_params(),
                exploration=self.get_exploration_params(),
            )
        except InvalidInputError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> Dict[str, Any]:
        """Return configuration as dictionary"""
        return self.config.copy()

    def to_text(self) -> str:
        lines = ['# Effective exploration configuration']
        lines.extend(f"{key} = {_format(self.config[key])}" for key in sorted(self.config))
        return '\n'.join(lines) + '\n'

    def save_to_file(self, filepath: Union[str, Path]):
        """Save configuration as a key = value file"""
        try:
            with open(filepath, 'w') as f:
                f.write(self.to_text())
            logging.debug(f"Configuration saved to {filepath}")
        except Exception as e:
            logging.error(f"Error saving configuration: {str(e)}")
            raise


@dataclass
class RunConfig:
    """One command-line run: the world, the seed, where to write, and the parameters"""
    world_file: Path
    seed: int = 0
    output_dir: Path = Path('runs/latest')
    config: Config = field(default_factory=Config)
    dump_candidates: bool = False

    def validate(self):
        """Raise if a referenced file is missing"""
        if not Path(self.world_file).is_file():
            raise FileNotFoundError(f"world file not found: {self.world_file}")


def load_config(config_file: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> Config:
    """Build a configuration from an optional file plus overrides"""
    config = Config(config_file, overrides)
    logging.debug("Configuration loaded")
    return config
