# Lab Configuration
LAB_CONFIG = {
    "ARTIFACT_VERSION": "curvlab 1.0.0",
    "LOG_LEVEL": "INFO",  # DEBUG | INFO | WARNING

    # Scenario: circle | sphere_profile | cylinder_profile | dumbbell | limacon | ellipse | from_file
    "SCENARIO": "circle",

    # Geometry Settings
    "GEOMETRY": {
        "RADIUS": 1.0,  # circle / sphere / cylinder radius
        "CENTER": [0.0, 0.0],
        "DIM_M": 2,  # dimension of the evolving hypersurface for profiles
        "ELLIPSE_AXES": [2.0, 1.0],
        "LIMACON_LOOP": 0.2,  # size of the inner loop (a - b with a = 1)
        "DUMBBELL_BULB": 1.0,
        "DUMBBELL_NECK": 0.3,
        "DUMBBELL_NECK_HALF_WIDTH": 0.8,
        "DUMBBELL_HALF_LENGTH": 2.0,
        "FROM_FILE": None,  # CSV snapshot (index,x,y[,k]) for scenario from_file
    },

    # Discretization
    "DISCRETIZATION": {
        "N": 256,  # vertices of a curve / nodes of a profile
        "C_CFL": 0.1,  # dt <= C_CFL / sup|II|^2
        "RESAMPLE_EVERY": 10,  # 0 = никогда
        "RESAMPLE_MODE": "arclength",  # arclength | curvature (узлы гуще там, где больше |II|)
        "RESAMPLE_WEIGHT": 0.8,  # доля кривизны в плотности узлов для curvature
        "STEP_TOL": 1e-5,  # допустимая локальная ошибка шага (в долях 1/sup|II|)
        "DT_MIN": 1e-16,
        "SNAPSHOT_GROWTH": 1.02,  # новый снимок при росте sup|II| в 1.02 раза
        "MAX_STEPS": 200000,
    },

    # Caps
    "CAPS": {
        "CURVATURE_CAP": 1000.0,
        "T_MAX": 10.0,
    },

    # Classification of the singularity
    "CLASSIFY": {
        "TAIL_FRACTION": 0.3,
        "BAND_RATIO": 4.0,
        "GROWTH_THRESHOLD": 10.0,
        "C_FLOOR": 0.1,
        "MIN_SNAPSHOTS": 10,
        "SIGMA_GUARD": 10.0,  # снимки с T - t < SIGMA_GUARD * sigma не используются
        "COMPACT_TOL": 0.05,  # диаметр argmax-вершин хвоста в долях длины образующей
    },

    # Blow-up Settings
    "BLOWUP": {
        "J_COUNT": 6,
        "TTILDE_RATE": 0.5,  # t~_j = T - (T - t_0) * rate^j
        "S_GRID": [-3.0, -2.0, -1.0, -0.5, 0.0],
        "CENTERING": "smooth",  # smooth | tangent
        "LIMIT_TOL": 0.02,
        "BOUND_TOL": 0.05,
        "CAUCHY_SLACK": 0.25,
        "CAUCHY_FLOOR": 1e-6,
        "LIMIT_LEVELS": 4,
    },

    # Shrinker / monotonicity Settings
    "SHRINKER": {
        "RESIDUAL_TOL": 1e-2,
        "TEMPLATE_SPREAD": 2e-2,  # допустимый разброс |x| (сфера) или u (цилиндр)
        "WINDOW": 0.5,  # полуширина окна по оси для профилей-графиков в кадре раздутия
        "WINDOW_MIN_NODES": 5,  # окно расширяется, пока в нём меньше узлов
        "RADIUS_TOL": 0.05,  # |R_fit / R_template - 1| для вердикта типа I
        "WEIGHT_VARIATION": 0.01,
        "WEIGHT_CUTOFF": 1e-12,
        "MONO_STEP_TOL": 1e-4,
        "MONO_DERIV_TOL": 0.05,
        "MONO_DERIV_FLOOR": 1e-6,  # абсолютный допуск на ΔΘ в долях Θ
        "EXTINCTION_HORIZON": 1.0,  # вымирание, если подогнанное s* в (0, HORIZON]
    },

    # Verify suites
    "VERIFY": {
        "PATCH_COUNT": 1000,
        "PATCH_SEED": 20240611,
        "PATCH_DEGREE": 4,
        "PATCH_RADIUS": 0.5,
        "PATCH_NODES": {"1": 9, "2": 9, "3": 7},
        "CORPUS": None,  # JSON-массив патчей в дополнение к случайным (tests/lemmas/patches.json)
        "SECOND_ORDER_TOL": 1e-8,
        "THIRD_ORDER_TOL": 1e-6,
        "EIGEN_TOL": 1e-10,
        "ATLAS_N": 256,
        "ATLAS_ALPHAS": [0.5, 1.0, 1.7320508075688772],
        "FLOW_N": 64,  # поток окружности для monotonicity и сертификатов снимков
        "FLOW_CAP": 50.0,
    },

    # Output
    "OUTPUT": {
        "OUT_DIR": "data/runs",
        "SEED": 0,
    },
}
