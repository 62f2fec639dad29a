from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from callaudit import print_messages
from callaudit.call_graph import CallGraph, build_project_graph
from callaudit.graph_ingest import GraphSample, LabelVocab, build_vocab, featurize_all
from callaudit.synthetic import SyntheticSpec, generate_graphs
from callaudit.tensor import default_dtype

REWARD_POOL_SOURCE = """\
contract RewardPool is Ownable{
   using SafeMath for uint256;
   IERC20 public rewardToken;
   mapping(address => uint256) public rewards;
   constructor(address _rewardToken) public{
       rewardToken = IERC20(_rewardToken);
       }
   function depositRewards(uint256 amount) external onlyOwner{
       rewardToken.transferFrom(msg.sender, address(this), amount);
      }
   function Reward() external{
       uint256 reward = rewards[msg.sender];
       require(reward > 0, "No rewards to claim");
       rewards[msg.sender] = 0;
       safeTokenTransfer(msg.sender, reward);
      }
   function safeTokenTransfer(address _to, uint256 _amount) internal{
       uint256 balance = rewardToken.balanceOf(address(this));
       uint256 value = _amount > balance ? balance : _amount;
       if (value > 0) {
           rewardToken.transfer(_to, value); // Unchecked Call Return Value
        }
    }
}
"""

REWARD_POOL_DOT = """\
digraph G {
  "RewardPool.Reward" [label="Reward"];
  "RewardPool.constructor" [label="constructor"];
  "RewardPool.depositRewards" [label="depositRewards"];
  "RewardPool.safeTokenTransfer" [label="safeTokenTransfer"];
  "rewardToken.balanceOf" [label="balanceOf"];
  "rewardToken.transfer" [label="transfer"];
  "rewardToken.transferFrom" [label="transferFrom"];
  "RewardPool.Reward" -> "RewardPool.safeTokenTransfer";
  "RewardPool.depositRewards" -> "rewardToken.transferFrom" [color="orange"];
  "RewardPool.safeTokenTransfer" -> "rewardToken.balanceOf" [color="orange"];
  "RewardPool.safeTokenTransfer" -> "rewardToken.transfer" [color="orange"];
}
"""


@pytest.fixture(autouse=True)
def _quiet_debug() -> Iterator[None]:
    before = print_messages.is_debug()
    print_messages.set_debug(False)
    yield
    print_messages.set_debug(before)


@pytest.fixture
def reward_pool_source() -> str:
    return REWARD_POOL_SOURCE


@pytest.fixture
def reward_pool_graph() -> CallGraph:
    return build_project_graph("RewardPool", {"RewardPool.sol": REWARD_POOL_SOURCE}).graph


@pytest.fixture
def source_tree(tmp_path: Path) -> Path:
    """A source directory with one single-file project and one two-file project."""
    root = tmp_path / "sources"
    (root / "pool").mkdir(parents=True)
    (root / "RewardPool.sol").write_text(REWARD_POOL_SOURCE, encoding="utf-8")
    (root / "pool" / "A.sol").write_text(
        "contract A is B { function f() public { g(); } }", encoding="utf-8"
    )
    (root / "pool" / "B.sol").write_text(
        "contract B { function g() public { } }", encoding="utf-8"
    )
    return root


@pytest.fixture(scope="session")
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(count=12, min_nodes=5, max_nodes=9, seed=3)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec: SyntheticSpec) -> tuple[list[GraphSample], LabelVocab]:
    graphs = generate_graphs(tiny_spec)
    vocab = build_vocab([item.graph for item in graphs], embedding_dim=8, seed=0)
    return featurize_all(graphs, vocab), vocab


@pytest.fixture
def float64() -> Iterator[None]:
    with default_dtype(np.float64):
        yield
