"""
Paquete con la lógica de la planificación:

- gp_core: prior, condicionamiento del GP y mejora esperada.
- acquisition: EI por usuario, EI sumado, EIrate y elección del próximo modelo.
- scheduler: políticas MMGPEI, RoundRobin y Random con arranque configurable.
- simulator: simulador de eventos discretos con M dispositivos.
- metrics: regret acumulado e instantáneo, MIU y cantidades de la cota.
- data_io: tablas de rendimiento, estimación del prior y generador sintético.
- errors, registro: excepciones y mensajes de consola.
"""
