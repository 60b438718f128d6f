# Source records for the bundled toy dataset; build_dataset.py adds minimal grammars.
GAMES = [
    dict(
        id="tic-tac-toe",
        category="board/space/line",
        query="Description: Tic-Tac-Toe is a game of alignment popular among children. "
        "Rules: Play occurs on a 3x3 grid. One player places an X, the other an O, "
        "taking turns. The first to get three in a row wins.",
        description="""(game "Tic-Tac-Toe"
    (players 2)
    (equipment {
        (board (square 3))
        (piece "Disc" P1)
        (piece "Cross" P2)
    })
    (rules
        (play (move Add (to (sites Empty))))
        (end (if (is Line 3) (result Mover Win)))
    )
)""",
    ),
    dict(
        id="tic-tac-four",
        category="board/space/line",
        query="Description: A larger Tic-Tac-Toe. Rules: Players alternate placing "
        "their marks on a 4x4 grid. Four in a row wins; a full board is a draw.",
        description="""(game "Tic-Tac-Four"
    (players 2)
    (equipment {
        (board (square 4))
        (piece "Disc" P1)
        (piece "Cross" P2)
    })
    (rules
        (play (move Add (to (sites Empty))))
        (end {
            (if (is Line 4) (result Mover Win))
            (if (is Full) (result Mover Draw))
        })
    )
)""",
    ),
    dict(
        id="gomoku",
        category="board/space/line",
        query="Description: Gomoku is played on the intersections of a 15x15 board. "
        "Rules: Players take turns placing a stone of their colour on an empty "
        "point. Five in a row wins. The second player may swap colours.",
        description="""(game "Gomoku"
    (players 2)
    (equipment {
        (board (square 15) use:Vertex)
        (piece "Marker" Each)
    })
    (rules
        (meta (swap))
        (play (move Add (to (sites Empty))))
        (end (if (is Line 5) (result Mover Win)))
    )
)""",
    ),
    dict(
        id="yavalath",
        category="board/space/line",
        query="Description: Yavalath is played on a hexagonal board. Rules: Players "
        "place pieces in turn. Making four in a row wins, but making three in a "
        "row first loses.",
        description="""(game "Yavalath"
    (players 2)
    (equipment {
        (board (hex 5))
        (piece "Marker" Each)
    })
    (rules
        (meta (swap))
        (play (move Add (to (sites Empty))))
        (end {
            (if (is Line 4) (result Mover Win))
            (if (is Line 3) (result Mover Loss))
        })
    )
)""",
    ),
    dict(
        id="oware-lite",
        category="board/sow",
        query="Description: A simplified two-row sowing game. Rules: Each hole starts "
        "with four seeds. A player picks a non-empty hole on their side and sows. "
        "When no move is possible the higher score wins.",
        description="""(game "Oware Lite"
    (players 2)
    (equipment {
        (board (mancalaBoard 2 6))
        (piece "Seed" Shared)
        (regions P1 (sites Bottom))
        (regions P2 (sites Top))
    })
    (rules
        (start (set Count 4 to:(sites Board)))
        (play
            (move Select
                (from (sites Mover) if:(> (count at:(from)) 0))
                then:(moveAgain)
            )
        )
        (end (if (no Moves Mover) (byScore)))
    )
)""",
    ),
    dict(
        id="kalah-lite",
        category="board/sow",
        query="Description: A Kalah variant with stores at both ends. Rules: Players "
        "sow from their side. Landing in an empty hole captures the neighbouring "
        "seeds. The player who leaves the opponent without moves wins.",
        description="""(game "Kalah Lite"
    (players 2)
    (equipment {
        (board (mancalaBoard 2 6 store:Outer))
        (piece "Seed" Shared)
        (hand Each)
        (regions P1 (sites Bottom))
        (regions P2 (sites Top))
    })
    (rules
        (start (set Count 4 to:(sites Board)))
        (play
            (move Sow
                if:(is Empty (last To))
                apply:(remove (sites Around (last To)))
            )
        )
        (end (if (no Moves Next) (result Mover Win)))
    )
)""",
    ),
    dict(
        id="bao-lite",
        category="board/sow",
        query="Description: A four-row mancala from East Africa, simplified. Rules: "
        "Sow if possible, otherwise pass. Capture all opposing seeds to win; a "
        "game longer than 200 moves is drawn.",
        description="""(game "Bao Lite"
    (players 2)
    (equipment {
        (board (mancalaBoard 4 8))
        (piece "Seed" Shared)
        (regions P1 (sites Bottom))
        (regions P2 (sites Top))
    })
    (rules
        (start (set Count 2 to:(sites Board)))
        (play (priority { (move Sow) (move Pass) }))
        (end {
            (if (= (count Pieces Next) 0) (result Mover Win))
            (if (>= (count Moves) 200) (result Mover Draw))
        })
    )
)""",
    ),
    dict(
        id="congkak-lite",
        category="board/sow",
        query="Description: A seven-hole mancala played without stores. Rules: Each "
        "hole holds seven seeds. After sowing the player moves again and empty "
        "holes are cleared. A player whose side is empty loses.",
        description="""(game "Congkak Lite"
    (players 2)
    (equipment {
        (board (mancalaBoard 2 7 store:None))
        (piece "Seed" Shared)
        (regions P1 (sites Bottom))
        (regions P2 (sites Top))
    })
    (rules
        (start {
            (set Count 7 to:(sites Bottom))
            (set Count 7 to:(sites Top))
        })
        (play
            (move Select
                (from (sites Mover))
                then:(and (moveAgain) (remove (sites Empty)))
            )
        )
        (end (if (< (count Sites in:(sites Occupied by:Next)) 1) (result Mover Win)))
    )
)""",
    ),
    dict(
        id="latin-square",
        category="puzzle",
        query="Description: Latin Square is a puzzle on an n by n grid. Rules: Place "
        "numbers so that no number repeats in any row or column.",
        description="""(game "Latin Square"
    (players 1)
    (equipment {
        (board (square 5))
    })
    (rules
        (play (move Set (to (sites Empty))))
        (end (if (and (is Full) (all Different)) (result P1 Win)))
    )
)""",
    ),
    dict(
        id="n-queens",
        category="puzzle",
        query="Description: Place eight queens on a chessboard. Rules: Queens are added "
        "to empty squares. The puzzle is solved when eight queens stand on the board.",
        description="""(game "N Queens"
    (players 1)
    (equipment {
        (board (square 8))
        (piece "Queen" P1)
    })
    (rules
        (play (move Add (to (sites Empty) if:(not (is Occupied (to))))))
        (end (if (= (count Pieces P1) 8) (result P1 Win)))
    )
)""",
    ),
    dict(
        id="mini-sudoku",
        category="puzzle",
        query="Description: A 4x4 Sudoku with two given clues. Rules: Fill every cell "
        "so that rows, columns and boxes hold different values.",
        description="""(game "Mini Sudoku"
    (players 1)
    (equipment {
        (board (square 4))
        (regions "Box" Shared (sites {0 1 4 5}))
        (hints { (hint 0 1) (hint 5 2) })
    })
    (rules
        (play (move Set (to (sites Empty))))
        (end (if (and (is Full) (all Different)) (result P1 Win)))
    )
)""",
    ),
    dict(
        id="hitori-lite",
        category="puzzle",
        query="Description: Shade cells of a 3x4 grid. Rules: Shade or unshade cells "
        "until no unshaded number repeats, ignoring zeros.",
        description="""(game "Hitori Lite"
    (players 1)
    (equipment {
        (board (rectangle 3 4))
        (piece "Shade" P1)
    })
    (rules
        (start (place "Shade" (sites {0 5})))
        (play
            (or
                (move Add (to (sites Empty)))
                (move Remove (sites Occupied by:P1))
            )
        )
        (end (if (all Different except:0) (result P1 Win)))
    )
)""",
    ),
]
