# Symbol catalog. The position of a name here is its catalog id, which gives a
# library-independent factor order for canonical equations.
SYMBOL_CATALOG = [
    'id',
    'square',
    'sqrt',
    'log',
    'cos',
    'sin',
]
WEIGHTED_SYMBOLS = ['sqrt', 'log', 'cos', 'sin']

LOG_DOMAIN_LOWER = 1e-12
SQRT_DOMAIN_LOWER = 0.0

# Layer kinds of a LoCaL stack.
ACTIVATION = 'activation'
MULTIPLICATION = 'multiplication'
SUMMATION = 'summation'
LAYER_KINDS = [ACTIVATION, MULTIPLICATION, SUMMATION]

# Datasets.
SYN1 = 'syn1'
SYN2 = 'syn2'
POW = 'pow'
MAS = 'mas'
TOY = 'toy'
DATASET_NAMES = [SYN1, SYN2, POW, MAS, TOY]

SYN1_LIBRARY = ['id', 'square', 'cos']
TOY_LIBRARY = ['id', 'square', 'cos']
SYN2_LIBRARY = ['sqrt', 'id', 'square', 'log', 'sin']
LINEAR_LIBRARY = ['id']

SYN_TRAIN_RANGE = (1.0, 2.0)
SYN_TEST_RANGE = (3.0, 4.0)
SYN_SAMPLES = 2000
TOY_SAMPLES = 100
POW_TRAIN_SAMPLES = 8760
POW_TOTAL_SAMPLES = 17520
POW_NODES = 5
MAS_NODES = 10
MAS_STEP_SECONDS = 0.01
MAS_DURATION_SECONDS = 60.0

# LoCaL training.
LOCAL_LEARNING_RATE = 1e-2
LOCAL_EPOCHS = 8
LOCAL_INIT_VALUE = 1.0
LOCAL_K = 3
POLISH_EPOCHS = 500
PRUNE_THRESHOLD = 0.01
MAX_LR_HALVINGS = 40

# Double convex deep Q-learning.
GAMMA = 0.2
EPSILON = 0.4
MAX_EPISODES = 600
STOP_LAMBDA = 1e-2
TARGET_UPDATE_INTERVAL = 10
BUFFER_CAPACITY = 10000
MINIBATCH_SIZE = 100
Q_LEARNING_RATE = 5e-3
R_LEARNING_RATE = 5e-3
Q_EPOCHS = 50
R_EPOCHS = 50
MINIMIZER_RESTARTS = 3
MINIMIZER_STEPS = 200
# stages up to this many connections get every valid action scored; larger
# stages score a sample of GREEDY_SAMPLED_ACTIONS valid actions
GREEDY_ENUMERATED_BITS = 12
GREEDY_SAMPLED_ACTIONS = 64
MAX_ENUMERATED_BITS = 16
MLP_HIDDEN_LAYERS = 2
MLP_WIDTH = 32

# ICNN.
ICNN_HIDDEN_LAYERS = 2
ICNN_WIDTH = 16
ICNN_INIT_STD = 0.1

# Symbolic constraints.
MAX_FACTORS_PER_NEURON = 3
CORR_KEEP_THRESHOLD = 0.99
CONSTRAINT_RETRY_CAP = 20
RANDOM_ACTION_DRAWS = 50
MULT_NEURONS_PER_OUTPUT = 3

# Probes.
SWEEP_GRID = list(range(-10, 11))
SEGMENT_TRIPLES = 10000
SEGMENT_TOL = 1e-9
PROBE_REL_TOL = 1e-4
DERIVATIVE_GUARD = 1e-10
FIT_LOSS_TOL = 1e-6

# CLI exit codes.
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PROBE = 4

CONFIG_VERSION = 1
THREADS_ENV = 'CONSOL_THREADS'
